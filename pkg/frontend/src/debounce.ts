export interface Debounced<Args extends unknown[]> {
  (...args: Args): void;
  cancel(): void;
  flush(): void;
}

/** Trailing-edge debounce: the wrapped fn runs once, `ms` after the last call,
 * with the most recent arguments. */
export function debounce<Args extends unknown[]>(
  fn: (...args: Args) => void,
  ms: number,
): Debounced<Args> {
  let timer: ReturnType<typeof setTimeout> | null = null;
  let pending: Args | null = null;

  const wrapped = (...args: Args): void => {
    pending = args;
    if (timer !== null) clearTimeout(timer);
    timer = setTimeout(() => {
      timer = null;
      const args2 = pending as Args;
      pending = null;
      fn(...args2);
    }, ms);
  };

  wrapped.cancel = (): void => {
    if (timer !== null) clearTimeout(timer);
    timer = null;
    pending = null;
  };

  wrapped.flush = (): void => {
    if (timer === null) return;
    clearTimeout(timer);
    timer = null;
    const args = pending as Args;
    pending = null;
    fn(...args);
  };

  return wrapped;
}
