import { centroid, cleanPolyline, resampleClosed } from './geometry.js';
import type { Pt } from './loopseq.js';

export interface View {
  scale: number; // canvas px per world unit
  cx: number; // canvas x of world origin
  cy: number; // canvas y of world origin (y axis flipped)
}

/** Fit all points into a canvas of the given size, with a pixel margin. */
export function fitView(points: Pt[], width: number, height: number, margin = 20): View {
  if (points.length === 0) return { scale: 1, cx: width / 2, cy: height / 2 };
  let minX = Infinity;
  let maxX = -Infinity;
  let minY = Infinity;
  let maxY = -Infinity;
  for (const [x, y] of points) {
    if (x < minX) minX = x;
    if (x > maxX) maxX = x;
    if (y < minY) minY = y;
    if (y > maxY) maxY = y;
  }
  const spanX = Math.max(maxX - minX, 1e-12);
  const spanY = Math.max(maxY - minY, 1e-12);
  const scale = Math.min((width - 2 * margin) / spanX, (height - 2 * margin) / spanY);
  const midX = (minX + maxX) / 2;
  const midY = (minY + maxY) / 2;
  return { scale, cx: width / 2 - midX * scale, cy: height / 2 + midY * scale };
}

export function toCanvas(view: View, p: Pt): Pt {
  return [view.cx + p[0] * view.scale, view.cy - p[1] * view.scale];
}

export function toWorld(view: View, p: Pt): Pt {
  return [(p[0] - view.cx) / view.scale, (view.cy - p[1]) / view.scale];
}

function segDistSq(p: Pt, a: Pt, b: Pt): number {
  const vx = b[0] - a[0];
  const vy = b[1] - a[1];
  const wx = p[0] - a[0];
  const wy = p[1] - a[1];
  const len2 = vx * vx + vy * vy;
  const t = len2 > 0 ? Math.max(0, Math.min(1, (wx * vx + wy * vy) / len2)) : 0;
  const dx = wx - t * vx;
  const dy = wy - t * vy;
  return dx * dx + dy * dy;
}

/** Nearest loop whose outline passes within `tol` world units; null if none. */
export function hitLoop(loops: Pt[][], p: Pt, tol: number): number | null {
  let best: number | null = null;
  let bestD = tol * tol;
  for (let i = 0; i < loops.length; i++) {
    const loop = loops[i];
    for (let j = 0; j < loop.length; j++) {
      const d = segDistSq(p, loop[j], loop[(j + 1) % loop.length]);
      if (d <= bestD) {
        bestD = d;
        best = i;
      }
    }
  }
  return best;
}

/** World-space translation for a drag between two canvas positions. */
export function dragDelta(view: View, start: Pt, current: Pt): Pt {
  return [(current[0] - start[0]) / view.scale, (start[1] - current[1]) / view.scale];
}

/** Scale factor implied by dragging a handle relative to the loop centroid. */
export function scaleFromHandle(center: Pt, start: Pt, current: Pt): number {
  const r0 = Math.hypot(start[0] - center[0], start[1] - center[1]);
  const r1 = Math.hypot(current[0] - center[0], current[1] - center[1]);
  if (r0 < 1e-12) return 1;
  return r1 / r0;
}

/**
 * Freehand stroke capture: gate near-duplicate samples, then close and
 * resample to the model's point count for a client-side preview.  The
 * server recomputes the authoritative resampling on submit.
 */
export class FreehandCapture {
  points: Pt[] = [];

  constructor(public minDist = 1e-3) {}

  begin(p: Pt): void {
    this.points = [p];
  }

  add(p: Pt): void {
    if (this.points.length === 0) {
      this.points = [p];
      return;
    }
    const last = this.points[this.points.length - 1];
    if (Math.hypot(p[0] - last[0], p[1] - last[1]) >= this.minDist) {
      this.points.push(p);
    }
  }

  preview(n: number): Pt[] {
    return resampleClosed(cleanPolyline(this.points), n);
  }

  clear(): void {
    this.points = [];
  }
}

export interface DrawStyle {
  stroke: string;
  width: number;
}

/** Paint loops onto a 2D canvas; selection gets a heavier stroke and handles. */
export function drawLoops(
  ctx: CanvasRenderingContext2D,
  view: View,
  loops: { points: Pt[]; style: DrawStyle }[],
  selected: number | null,
): void {
  for (let i = 0; i < loops.length; i++) {
    const { points, style } = loops[i];
    if (points.length < 2) continue;
    ctx.beginPath();
    const [x0, y0] = toCanvas(view, points[0]);
    ctx.moveTo(x0, y0);
    for (let j = 1; j < points.length; j++) {
      const [x, y] = toCanvas(view, points[j]);
      ctx.lineTo(x, y);
    }
    ctx.closePath();
    ctx.strokeStyle = style.stroke;
    ctx.lineWidth = i === selected ? style.width + 1.5 : style.width;
    ctx.stroke();
    if (i === selected) {
      const c = toCanvas(view, centroid(points));
      ctx.beginPath();
      ctx.arc(c[0], c[1], 3, 0, 2 * Math.PI);
      ctx.fillStyle = style.stroke;
      ctx.fill();
      const h = toCanvas(view, points[0]);
      ctx.beginPath();
      ctx.rect(h[0] - 4, h[1] - 4, 8, 8);
      ctx.stroke();
    }
  }
}
