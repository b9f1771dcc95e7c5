import { describe, expect, it } from 'vitest';
import { CLASS_COLORS, classifySteps } from '../src/colors.js';

describe('classifySteps', () => {
  it('marks everything original before any edit', () => {
    expect(classifySteps(['model', 'model', 'model'], new Set(), null)).toEqual([
      'original',
      'original',
      'original',
    ]);
  });

  it('splits original / edited / regenerated around the first edit', () => {
    const out = classifySteps(['model', 'model', 'model', 'model'], new Set([2]), 2);
    expect(out).toEqual(['original', 'edited', 'regenerated', 'regenerated']);
  });

  it('inserted tokens are edited even after the first edit', () => {
    const out = classifySteps(['model', 'inserted', 'model'], new Set(), 1);
    expect(out).toEqual(['original', 'edited', 'regenerated']);
  });

  it('multiple edited steps all show as edited', () => {
    const out = classifySteps(['model', 'model', 'model'], new Set([1, 3]), 1);
    expect(out).toEqual(['edited', 'regenerated', 'edited']);
  });

  it('uses three distinct colors', () => {
    const values = new Set(Object.values(CLASS_COLORS));
    expect(values.size).toBe(3);
  });
});
