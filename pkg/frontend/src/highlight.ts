/**
 * Passage segmentation for span highlighting.
 *
 * The server sends [start, end) character offsets into the passage; the view
 * must show exactly the text the validator anchored against, so segments are
 * produced by slicing the original string and concatenating all segments
 * always reproduces the passage byte for byte.
 */

export interface Segment {
  text: string;
  highlighted: boolean;
}

/** Clamp, sort, and merge overlapping or touching spans. */
export function mergeSpans(spans: [number, number][], length: number): [number, number][] {
  const clamped = spans
    .map(([s, e]): [number, number] => [Math.max(0, s), Math.min(length, e)])
    .filter(([s, e]) => s < e)
    .sort((a, b) => a[0] - b[0] || a[1] - b[1]);
  const merged: [number, number][] = [];
  for (const [s, e] of clamped) {
    const last = merged[merged.length - 1];
    if (last && s <= last[1]) {
      last[1] = Math.max(last[1], e);
    } else {
      merged.push([s, e]);
    }
  }
  return merged;
}

export function splitSpans(text: string, spans: [number, number][]): Segment[] {
  const merged = mergeSpans(spans, text.length);
  const segments: Segment[] = [];
  let cursor = 0;
  for (const [s, e] of merged) {
    if (cursor < s) {
      segments.push({ text: text.slice(cursor, s), highlighted: false });
    }
    segments.push({ text: text.slice(s, e), highlighted: true });
    cursor = e;
  }
  if (cursor < text.length) {
    segments.push({ text: text.slice(cursor), highlighted: false });
  }
  return segments;
}
