import type { EditResult, Sketch } from "../src/types.js";

export interface RecordedCall {
  url: string;
  init: RequestInit | undefined;
  body: unknown;
}

/** fetch stub that records every call and answers via `respond`. */
export function makeFetchStub(
  respond: (call: RecordedCall, n: number) => Response | Promise<Response>,
) {
  const calls: RecordedCall[] = [];
  const impl = async (url: string, init?: RequestInit): Promise<Response> => {
    const body = init?.body !== undefined ? JSON.parse(String(init.body)) : undefined;
    const call: RecordedCall = { url, init, body };
    calls.push(call);
    return respond(call, calls.length - 1);
  };
  return { calls, impl };
}

export function jsonResponse(data: unknown, status = 200): Response {
  return new Response(JSON.stringify(data), {
    status,
    headers: { "content-type": "application/json" },
  });
}

export function editResult(edited: Sketch, extra: Partial<EditResult> = {}): EditResult {
  return {
    mode: "manipulate",
    edited,
    svg: '<svg xmlns="http://www.w3.org/2000/svg" viewBox="-1 -1 2 2"></svg>',
    raster_b64: "",
    image_size: 16,
    ...extra,
  };
}

export function sampleSketch(): Sketch {
  return {
    version: 1,
    strokes: [
      { points: [[0, 0], [0.5, 0], [1, 0]], pen: [0, 0, 1] },
      { points: [[0, 1], [0.5, 1.5], [1, 1]], pen: [0, 0, 2] },
    ],
  };
}

export function deepCopy<T>(value: T): T {
  return JSON.parse(JSON.stringify(value)) as T;
}

/** Drain chained microtasks (fetch stub + response parsing) under fake timers. */
export async function flushMicrotasks(rounds = 25): Promise<void> {
  for (let i = 0; i < rounds; i++) await Promise.resolve();
}
