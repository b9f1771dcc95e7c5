/** Three-way loop styling: untouched, directly edited, regenerated after an edit. */
export type LoopClass = 'original' | 'edited' | 'regenerated';

export const CLASS_COLORS: Record<LoopClass, number> = {
  original: 0x4a90d9,
  edited: 0xe08a2e,
  regenerated: 0x4caf6e,
};

/**
 * Classify emitted steps (1-based): a step directly touched by an edit or
 * inserted is 'edited'; model output after the earliest edit is 'regenerated'.
 */
export function classifySteps(
  sources: ('model' | 'inserted')[],
  editedSteps: Set<number>,
  firstEditStep: number | null,
): LoopClass[] {
  return sources.map((source, i) => {
    const step = i + 1;
    if (source === 'inserted' || editedSteps.has(step)) return 'edited';
    if (firstEditStep !== null && step > firstEditStep) return 'regenerated';
    return 'original';
  });
}
