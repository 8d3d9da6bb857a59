/** Failure-mode labels and their keyboard shortcuts (1..5). */

export const VERDICT_LABELS = [
  "Grounded",
  "OverGeneralization",
  "ImplicitAssumption",
  "UnsupportedReasoning",
  "Unsafe",
] as const;

export type VerdictLabel = (typeof VERDICT_LABELS)[number];

export const LABEL_DESCRIPTIONS: Record<VerdictLabel, string> = {
  Grounded: "Fully supported by the highlighted spans",
  OverGeneralization: "Broader claim than the source supports",
  ImplicitAssumption: "Relies on facts the passage never states",
  UnsupportedReasoning: "Reasoning steps not derivable from the source",
  Unsafe: "Prescriptive or potentially harmful advice",
};

/** Map a keyboard key ("1".."5") to its label, or null. */
export function labelForKey(key: string): VerdictLabel | null {
  const index = Number.parseInt(key, 10) - 1;
  if (Number.isInteger(index) && index >= 0 && index < VERDICT_LABELS.length) {
    return VERDICT_LABELS[index] ?? null;
  }
  return null;
}
