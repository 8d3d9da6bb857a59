/**
 * Lease countdown that never trusts the browser clock.
 *
 * The server reports lease_expires_at and server_time in the same response;
 * remaining time is their difference minus locally elapsed time since the
 * response arrived.
 */

export function remainingSeconds(
  leaseExpiresAt: number,
  serverTimeAtFetch: number,
  localElapsedSeconds: number,
): number {
  return Math.max(0, leaseExpiresAt - serverTimeAtFetch - localElapsedSeconds);
}

export function formatCountdown(seconds: number): string {
  const whole = Math.floor(seconds);
  const minutes = Math.floor(whole / 60);
  const rest = whole % 60;
  return `${minutes}:${rest.toString().padStart(2, "0")}`;
}
