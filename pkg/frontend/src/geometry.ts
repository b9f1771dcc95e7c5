import type { Pt } from './loopseq.js';

/** Drop repeated consecutive points and a duplicated closing point. */
export function cleanPolyline(points: Pt[]): Pt[] {
  const out: Pt[] = [];
  for (const p of points) {
    const last = out[out.length - 1];
    if (!last || last[0] !== p[0] || last[1] !== p[1]) out.push([p[0], p[1]]);
  }
  if (out.length > 1) {
    const a = out[0];
    const b = out[out.length - 1];
    if (a[0] === b[0] && a[1] === b[1]) out.pop();
  }
  return out;
}

/**
 * Arc-length-uniform resampling of a closed polyline to n points.
 * Preview only: the server recomputes this authoritatively on submit.
 */
export function resampleClosed(points: Pt[], n: number): Pt[] {
  const loop = cleanPolyline(points);
  if (loop.length < 3) throw new Error('need at least 3 distinct points');
  if (n < 3) throw new Error('need at least 3 output points');
  const segLen: number[] = [];
  let total = 0;
  for (let i = 0; i < loop.length; i++) {
    const a = loop[i];
    const b = loop[(i + 1) % loop.length];
    const d = Math.hypot(b[0] - a[0], b[1] - a[1]);
    segLen.push(d);
    total += d;
  }
  if (total <= 0) throw new Error('polyline has zero perimeter');
  const out: Pt[] = [];
  let seg = 0;
  let segStart = 0;
  for (let k = 0; k < n; k++) {
    const s = (k * total) / n;
    while (seg < loop.length - 1 && segStart + segLen[seg] <= s) {
      segStart += segLen[seg];
      seg += 1;
    }
    const a = loop[seg];
    const b = loop[(seg + 1) % loop.length];
    const frac = segLen[seg] > 0 ? (s - segStart) / segLen[seg] : 0;
    out.push([a[0] + frac * (b[0] - a[0]), a[1] + frac * (b[1] - a[1])]);
  }
  return out;
}

export function centroid(points: Pt[]): Pt {
  let x = 0;
  let y = 0;
  for (const p of points) {
    x += p[0];
    y += p[1];
  }
  return [x / points.length, y / points.length];
}

export function translateLoop(points: Pt[], dx: number, dy: number): Pt[] {
  return points.map((p) => [p[0] + dx, p[1] + dy]);
}

export function scaleLoop(points: Pt[], factor: number): Pt[] {
  const c = centroid(points);
  return points.map((p) => [c[0] + factor * (p[0] - c[0]), c[1] + factor * (p[1] - c[1])]);
}

export function boundingBox(loops: Pt[][]): { lo: Pt; hi: Pt } | null {
  let lo: Pt | null = null;
  let hi: Pt | null = null;
  for (const loop of loops) {
    for (const p of loop) {
      if (!lo || !hi) {
        lo = [p[0], p[1]];
        hi = [p[0], p[1]];
      } else {
        lo[0] = Math.min(lo[0], p[0]);
        lo[1] = Math.min(lo[1], p[1]);
        hi[0] = Math.max(hi[0], p[0]);
        hi[1] = Math.max(hi[1], p[1]);
      }
    }
  }
  return lo && hi ? { lo, hi } : null;
}
