/** Reconnect delay policy: exponential, deterministic, capped. */

export const BASE_DELAY_MS = 500;
export const MAX_DELAY_MS = 10_000;

/** Delay before reconnect attempt n (n = 0 for the first retry). */
export function reconnectDelay(attempt: number): number {
  if (!Number.isFinite(attempt) || attempt < 0) {
    return BASE_DELAY_MS;
  }
  const raw = BASE_DELAY_MS * 2 ** Math.floor(attempt);
  return Math.min(raw, MAX_DELAY_MS);
}
