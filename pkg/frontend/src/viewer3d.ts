import * as THREE from 'three';
import { CLASS_COLORS } from './colors.js';
import type { LoopSeqHeader } from './loopseq.js';
import type { RenderState } from './state.js';

export interface PlaneFrames {
  normal: [number, number, number];
  origins: [number, number, number][];
}

type Vec3 = [number, number, number];

function cross(a: Vec3, b: Vec3): Vec3 {
  // + 0 canonicalizes -0 components from products of zeros
  return [
    a[1] * b[2] - a[2] * b[1] + 0,
    a[2] * b[0] - a[0] * b[2] + 0,
    a[0] * b[1] - a[1] * b[0] + 0,
  ];
}

function norm(v: Vec3): number {
  return Math.hypot(v[0], v[1], v[2]);
}

function scale(v: Vec3, s: number): Vec3 {
  return [v[0] * s, v[1] * s, v[2] * s];
}

/**
 * In-plane frame matching the service's convention: cross the normal with the
 * canonical axis it is least aligned with, then complete the right-handed pair.
 */
export function planeFrame(normal: Vec3): { x: Vec3; y: Vec3 } {
  const n = scale(normal, 1 / norm(normal));
  const abs = n.map(Math.abs);
  let axis = 0;
  if (abs[1] < abs[axis]) axis = 1;
  if (abs[2] < abs[axis]) axis = 2;
  const a: Vec3 = [0, 0, 0];
  a[axis] = 1;
  let x = cross(a, n);
  x = scale(x, 1 / norm(x));
  const y = cross(n, x);
  return { x, y };
}

export function framesFromHeader(header: LoopSeqHeader | null): PlaneFrames | null {
  if (!header || !header.plane_origins || !header.plane_normal) return null;
  return {
    normal: header.plane_normal as [number, number, number],
    origins: header.plane_origins as [number, number, number][],
  };
}

/** Without a plane schedule, stack planes along z at even spacing for display. */
function fallbackFrames(planeCount: number): PlaneFrames {
  const n = Math.max(planeCount, 1);
  const origins: Vec3[] = [];
  for (let i = 0; i < n; i++) origins.push([0, 0, (i + 0.5) / n]);
  return { normal: [0, 0, 1], origins };
}

export function embedLoop(points: [number, number][], origin: Vec3, x: Vec3, y: Vec3): Float32Array {
  const out = new Float32Array(points.length * 3);
  for (let i = 0; i < points.length; i++) {
    const [u, v] = points[i];
    out[3 * i] = origin[0] + u * x[0] + v * y[0];
    out[3 * i + 1] = origin[1] + u * x[1] + v * y[1];
    out[3 * i + 2] = origin[2] + u * x[2] + v * y[2];
  }
  return out;
}

/**
 * Build the orbitable loop-stack scene: one LineLoop per loop, colored by its
 * class (original / edited / regenerated), embedded on its slicing plane.
 */
export function buildLoopStackScene(render: RenderState, frames: PlaneFrames | null): THREE.Group {
  const group = new THREE.Group();
  group.add(new THREE.AxesHelper(1));
  if (render.loops.length === 0) return group;
  const f = frames ?? fallbackFrames(render.planeCount);
  const { x, y } = planeFrame(f.normal);
  for (const loop of render.loops) {
    const origin = f.origins[Math.min(loop.plane, f.origins.length - 1)] ?? [0, 0, 0];
    const geom = new THREE.BufferGeometry();
    geom.setAttribute('position', new THREE.BufferAttribute(embedLoop(loop.points, origin, x, y), 3));
    const mat = new THREE.LineBasicMaterial({ color: CLASS_COLORS[loop.cls] });
    const line = new THREE.LineLoop(geom, mat);
    line.name = `loop-s${loop.step}`;
    line.userData = { plane: loop.plane, step: loop.step, cls: loop.cls };
    group.add(line);
  }
  return group;
}

/** Swap the previous loop-stack group for a fresh one built from `render`. */
export function replaceLoopStack(
  scene: THREE.Scene,
  previous: THREE.Group | null,
  render: RenderState,
  frames: PlaneFrames | null,
): THREE.Group {
  if (previous) {
    scene.remove(previous);
    previous.traverse((obj) => {
      const mesh = obj as THREE.LineLoop;
      if (mesh.geometry) mesh.geometry.dispose();
      const mat = (mesh as { material?: THREE.Material }).material;
      if (mat) mat.dispose();
    });
  }
  const group = buildLoopStackScene(render, frames);
  scene.add(group);
  return group;
}
