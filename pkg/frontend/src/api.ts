import type { EditRequest, EditResult, ModelInfo, NormalizeResult, Stroke } from "./types.js";

export class ServiceError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ServiceError";
  }
}

/** Thrown (as a rejection) when a newer edit request supersedes this one. */
export class SupersededError extends Error {
  constructor() {
    super("request superseded by a newer edit");
    this.name = "SupersededError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** HTTP client for the sketch service. At most one edit request is in flight:
 * issuing a new one aborts the previous, whose promise rejects with
 * SupersededError. */
export class EditClient {
  private inflight: AbortController | null = null;

  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  private async parse<T>(response: Response): Promise<T> {
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = (await response.json()) as { detail?: unknown };
        if (body && body.detail !== undefined) detail = JSON.stringify(body.detail);
      } catch {
        // non-JSON error body; keep statusText
      }
      throw new ServiceError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  async edit(request: EditRequest): Promise<EditResult> {
    if (this.inflight !== null) this.inflight.abort();
    const controller = new AbortController();
    this.inflight = controller;
    try {
      const response = await this.fetchImpl(this.url("/edit"), {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(request),
        signal: controller.signal,
      });
      if (controller.signal.aborted) throw new SupersededError();
      return await this.parse<EditResult>(response);
    } catch (err) {
      if (controller.signal.aborted) throw new SupersededError();
      throw err;
    } finally {
      if (this.inflight === controller) this.inflight = null;
    }
  }

  async normalize(stroke: Stroke): Promise<NormalizeResult> {
    const response = await this.fetchImpl(this.url("/normalize"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ stroke }),
    });
    return this.parse<NormalizeResult>(response);
  }

  async model(): Promise<ModelInfo> {
    const response = await this.fetchImpl(this.url("/model"));
    return this.parse<ModelInfo>(response);
  }

  async health(): Promise<{ status: string }> {
    const response = await this.fetchImpl(this.url("/health"));
    return this.parse<{ status: string }>(response);
  }
}
