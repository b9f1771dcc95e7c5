import { describe, expect, it } from 'vitest';
import { loopOf, parseLoopSeq, planeOfTokens } from '../src/loopseq.js';

const header = {
  version: 1,
  N: 4,
  plane_count: 2,
  axis: null,
  plane_origins: null,
  plane_normal: null,
};

function doc(tokens: { coords: number[]; level_up: number }[], h: object = header): string {
  return [JSON.stringify(h), ...tokens.map((t) => JSON.stringify(t))].join('\n') + '\n';
}

const tok = (flag: number, fill = 0.1) => ({
  coords: [fill, 0, 0, fill, -fill, 0, 0, -fill],
  level_up: flag,
});

describe('parseLoopSeq', () => {
  it('parses header and tokens', () => {
    const seq = parseLoopSeq(doc([tok(1), tok(0, 0.2), tok(1, 0.3)]));
    expect(seq.header.N).toBe(4);
    expect(seq.header.plane_count).toBe(2);
    expect(seq.tokens).toHaveLength(3);
    expect(seq.tokens[1].coords[0]).toBe(0.2);
    expect(seq.tokens[2].level_up).toBe(1);
  });

  it('accepts a header-only document (empty sequence)', () => {
    expect(parseLoopSeq(doc([])).tokens).toEqual([]);
  });

  it('rejects an empty document', () => {
    expect(() => parseLoopSeq('')).toThrow(/header/);
  });

  it('rejects a non-JSON header', () => {
    expect(() => parseLoopSeq('not json\n')).toThrow(/not valid JSON/);
  });

  it('rejects a header without N', () => {
    expect(() => parseLoopSeq(doc([tok(1)], { plane_count: 2 }))).toThrow(/N and plane_count/);
  });

  it('rejects a token with the wrong coordinate count', () => {
    const bad = doc([{ coords: [0, 0, 1, 1], level_up: 1 }]);
    expect(() => parseLoopSeq(bad)).toThrow(/8 coords/);
  });

  it('rejects level_up outside {0, 1}', () => {
    const bad = doc([{ coords: tok(1).coords, level_up: 2 }]);
    expect(() => parseLoopSeq(bad)).toThrow(/level_up/);
  });

  it('rejects a first token without the level-up flag', () => {
    expect(() => parseLoopSeq(doc([tok(0)]))).toThrow(/first token/);
  });

  it('rejects more flags than planes', () => {
    expect(() => parseLoopSeq(doc([tok(1), tok(1), tok(1)]))).toThrow(/exceed/);
  });
});

describe('token helpers', () => {
  it('loopOf splits interleaved coords into points', () => {
    expect(loopOf(tok(1))).toEqual([
      [0.1, 0],
      [0, 0.1],
      [-0.1, 0],
      [0, -0.1],
    ]);
  });

  it('planeOfTokens walks cumulative level-up flags', () => {
    const tokens = [tok(1), tok(0), tok(0), tok(1), tok(0)];
    expect(planeOfTokens(tokens)).toEqual([0, 0, 0, 1, 1]);
  });
});
