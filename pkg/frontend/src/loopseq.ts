export interface LoopSeqHeader {
  version: number;
  N: number;
  plane_count: number;
  axis: number | null;
  plane_origins: number[][] | null;
  plane_normal: number[] | null;
}

export interface LoopToken {
  coords: number[]; // 2N interleaved x, y
  level_up: number;
}

export interface LoopSeq {
  header: LoopSeqHeader;
  tokens: LoopToken[];
}

export type Pt = [number, number];

/** Parse .loopseq NDJSON: a header line followed by one record per token. */
export function parseLoopSeq(text: string): LoopSeq {
  const lines = text.split('\n').filter((l) => l.trim().length > 0);
  if (lines.length < 1) throw new Error('loopseq: missing header line');
  let header: LoopSeqHeader;
  try {
    header = JSON.parse(lines[0]) as LoopSeqHeader;
  } catch {
    throw new Error('loopseq: header is not valid JSON');
  }
  if (typeof header.N !== 'number' || typeof header.plane_count !== 'number') {
    throw new Error('loopseq: header must carry N and plane_count');
  }
  const tokens: LoopToken[] = [];
  for (let i = 1; i < lines.length; i++) {
    let rec: { coords?: unknown; level_up?: unknown };
    try {
      rec = JSON.parse(lines[i]);
    } catch {
      throw new Error(`loopseq: line ${i + 1} is not valid JSON`);
    }
    if (!Array.isArray(rec.coords) || rec.coords.length !== 2 * header.N) {
      throw new Error(`loopseq: line ${i + 1} needs ${2 * header.N} coords`);
    }
    if (rec.level_up !== 0 && rec.level_up !== 1) {
      throw new Error(`loopseq: line ${i + 1} level_up must be 0 or 1`);
    }
    tokens.push({ coords: rec.coords.map(Number), level_up: rec.level_up });
  }
  if (tokens.length > 0 && tokens[0].level_up !== 1) {
    throw new Error('loopseq: first token must raise the level-up flag');
  }
  let flags = 0;
  for (const t of tokens) flags += t.level_up;
  if (flags > header.plane_count) {
    throw new Error(`loopseq: ${flags} level-up flags exceed ${header.plane_count} planes`);
  }
  return { header, tokens };
}

export function loopOf(token: LoopToken): Pt[] {
  const pts: Pt[] = [];
  for (let i = 0; i + 1 < token.coords.length; i += 2) {
    pts.push([token.coords[i], token.coords[i + 1]]);
  }
  return pts;
}

/** Walk level-up flags: token t belongs to the plane its cumulative flags select. */
export function planeOfTokens(tokens: LoopToken[]): number[] {
  const out: number[] = [];
  let current = -1;
  for (const t of tokens) {
    if (t.level_up === 1) current += 1;
    out.push(current);
  }
  return out;
}
