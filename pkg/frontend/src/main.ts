import * as THREE from 'three';
import { OrbitControls } from 'three/examples/jsm/controls/OrbitControls.js';
import { ApiError, Client } from './api.js';
import { CLASS_COLORS } from './colors.js';
import {
  drawLoops,
  dragDelta,
  fitView,
  FreehandCapture,
  hitLoop,
  scaleFromHandle,
  toWorld,
  type View,
} from './editor2d.js';
import { centroid, scaleLoop, translateLoop } from './geometry.js';
import { parseLoopSeq, type Pt } from './loopseq.js';
import { SessionStore, type RenderLoop } from './state.js';
import type { EditOp, ModelInfo, StopRule } from './types.js';
import { framesFromHeader, replaceLoopStack } from './viewer3d.js';

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const statusLine = el<HTMLSpanElement>('status');

function setStatus(text: string, isError = false): void {
  statusLine.textContent = text;
  statusLine.className = isError ? 'status error' : 'status';
}

function reportError(err: unknown): void {
  if (err instanceof ApiError) {
    setStatus(`${err.body.code}: ${err.body.message}`, true);
  } else {
    setStatus(String(err), true);
  }
}

// --- service client; the page is served from /ui, endpoints live at the root
const client = new Client('');

let model: ModelInfo | null = null;
let active: SessionStore | null = null;
const sessions: SessionStore[] = [];

// --- 3D viewport ------------------------------------------------------------
const viewport = el<HTMLDivElement>('viewport');
const scene = new THREE.Scene();
scene.background = new THREE.Color(0x16181d);
const camera = new THREE.PerspectiveCamera(50, 1, 0.01, 100);
camera.position.set(1.6, 1.2, 1.6);
const renderer = new THREE.WebGLRenderer({ antialias: true });
viewport.appendChild(renderer.domElement);
const controls = new OrbitControls(camera, renderer.domElement);
controls.target.set(0.5, 0.5, 0.5);
let loopGroup: THREE.Group | null = null;

function sizeViewport(): void {
  const w = viewport.clientWidth || 640;
  const h = viewport.clientHeight || 480;
  renderer.setSize(w, h);
  camera.aspect = w / h;
  camera.updateProjectionMatrix();
}
window.addEventListener('resize', sizeViewport);
sizeViewport();

function animate(): void {
  requestAnimationFrame(animate);
  controls.update();
  renderer.render(scene, camera);
}
animate();

// --- 2D plane editor ---------------------------------------------------------
const canvas = el<HTMLCanvasElement>('editor-canvas');
const ctx = canvas.getContext('2d');
const planeSelect = el<HTMLSelectElement>('plane-select');
type Mode = 'drag' | 'scale' | 'draw';
let mode: Mode = 'drag';
let view: View = { scale: 1, cx: canvas.width / 2, cy: canvas.height / 2 };
let planeLoops: RenderLoop[] = [];
let selected: number | null = null; // index into planeLoops

interface DragState {
  kind: Mode;
  loop: number;
  startWorld: Pt;
  preview: Pt[] | null;
  factor: number;
  delta: Pt;
}
let drag: DragState | null = null;
const freehand = new FreehandCapture(2e-3);

function cssColor(hex: number): string {
  return `#${hex.toString(16).padStart(6, '0')}`;
}

function redraw2d(): void {
  if (!ctx) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const styled = planeLoops.map((l, i) => {
    let pts = l.points;
    if (drag && drag.loop === i && drag.preview) pts = drag.preview;
    return { points: pts, style: { stroke: cssColor(CLASS_COLORS[l.cls]), width: 1.5 } };
  });
  if (mode === 'draw' && freehand.points.length > 1) {
    styled.push({ points: freehand.points, style: { stroke: '#cccccc', width: 1 } });
  }
  drawLoops(ctx, view, styled, selected);
}

function refreshPlaneLoops(): void {
  if (!active) {
    planeLoops = [];
    selected = null;
    redraw2d();
    return;
  }
  const render = active.renderState();
  planeLoops = render.loops.filter((l) => l.plane === active!.selectedPlane);
  if (selected !== null && selected >= planeLoops.length) selected = null;
  const all: Pt[] = [];
  for (const l of planeLoops) all.push(...l.points);
  view = fitView(all, canvas.width, canvas.height);
  redraw2d();
}

function canvasPoint(ev: MouseEvent): Pt {
  const rect = canvas.getBoundingClientRect();
  return [ev.clientX - rect.left, ev.clientY - rect.top];
}

canvas.addEventListener('mousedown', (ev) => {
  const cpt = canvasPoint(ev);
  const wpt = toWorld(view, cpt);
  if (mode === 'draw') {
    freehand.begin(wpt);
    drag = { kind: 'draw', loop: -1, startWorld: wpt, preview: null, factor: 1, delta: [0, 0] };
    return;
  }
  const hit = hitLoop(planeLoops.map((l) => l.points), wpt, 12 / view.scale);
  if (hit === null) {
    selected = null;
    redraw2d();
    return;
  }
  selected = hit;
  drag = { kind: mode, loop: hit, startWorld: wpt, preview: null, factor: 1, delta: [0, 0] };
  redraw2d();
});

canvas.addEventListener('mousemove', (ev) => {
  if (!drag) return;
  const wpt = toWorld(view, canvasPoint(ev));
  if (drag.kind === 'draw') {
    freehand.add(wpt);
    redraw2d();
    return;
  }
  const loop = planeLoops[drag.loop];
  if (drag.kind === 'drag') {
    const start = [view.cx + drag.startWorld[0] * view.scale, view.cy - drag.startWorld[1] * view.scale] as Pt;
    drag.delta = dragDelta(view, start, canvasPoint(ev));
    drag.preview = translateLoop(loop.points, drag.delta[0], drag.delta[1]);
  } else {
    drag.factor = scaleFromHandle(centroid(loop.points), drag.startWorld, wpt);
    drag.preview = scaleLoop(loop.points, drag.factor);
  }
  redraw2d();
});

canvas.addEventListener('mouseup', () => {
  if (!drag || !active) {
    drag = null;
    return;
  }
  try {
    if (drag.kind === 'draw') {
      const n = model ? model.config.n_points : 32;
      const preview = freehand.preview(n);
      if (selected !== null) {
        const target = planeLoops[selected];
        const flag = active.tokens[target.step - 1]?.level_up ?? 0;
        active.stage({ op: 'replace', loop: preview, flag, step: target.step });
        setStatus(`staged freehand replace for step ${target.step}`);
      } else {
        setStatus('freehand captured; select a loop first to stage a replace', true);
      }
      freehand.clear();
    } else if (drag.kind === 'drag' && (drag.delta[0] !== 0 || drag.delta[1] !== 0)) {
      const step = planeLoops[drag.loop].step;
      active.stage({ op: 'translate', dx: drag.delta[0], dy: drag.delta[1], step });
      setStatus(`staged translate (${drag.delta[0].toFixed(4)}, ${drag.delta[1].toFixed(4)}) at step ${step}`);
    } else if (drag.kind === 'scale' && drag.factor !== 1) {
      const step = planeLoops[drag.loop].step;
      active.stage({ op: 'scale', factor: drag.factor, step });
      setStatus(`staged scale x${drag.factor.toFixed(4)} at step ${step}`);
    }
  } catch (err) {
    reportError(err);
  }
  drag = null;
  refreshStagedList();
  redraw2d();
});

for (const m of ['drag', 'scale', 'draw'] as Mode[]) {
  el<HTMLButtonElement>(`mode-${m}`).addEventListener('click', () => {
    mode = m;
    for (const other of ['drag', 'scale', 'draw']) {
      el<HTMLButtonElement>(`mode-${other}`).classList.toggle('active', other === m);
    }
  });
}

planeSelect.addEventListener('change', () => {
  if (active) active.selectedPlane = Number(planeSelect.value);
  refreshPlaneLoops();
});

// --- repaint pipeline ---------------------------------------------------------
function repaint(): void {
  if (!active) {
    loopGroup = replaceLoopStack(scene, loopGroup, { planeCount: 0, loops: [] }, null);
    refreshPlaneLoops();
    renderSessionTabs();
    return;
  }
  const render = active.renderState();
  loopGroup = replaceLoopStack(scene, loopGroup, render, framesFromHeader(active.lastHeader));
  const planes = new Set(render.loops.map((l) => l.plane));
  const keep = planeSelect.value;
  planeSelect.innerHTML = '';
  for (const p of [...planes].sort((a, b) => a - b)) {
    const opt = document.createElement('option');
    opt.value = String(p);
    opt.textContent = `plane ${p}`;
    planeSelect.appendChild(opt);
  }
  if ([...planes].includes(Number(keep))) planeSelect.value = keep;
  active.selectedPlane = Number(planeSelect.value || 0);
  refreshPlaneLoops();
  renderSessionTabs();
  const s = active.snapshot;
  if (s) {
    el<HTMLSpanElement>('session-info').textContent =
      `${s.session_id.slice(0, 8)} | ${s.status} | step ${s.step_count} | flags ${s.flag_count}` +
      (s.pending_edits ? ` | ${s.pending_edits} pending` : '');
  }
}

function refreshStagedList(): void {
  const list = el<HTMLUListElement>('staged');
  list.innerHTML = '';
  if (!active) return;
  for (const op of active.stagedEdits) {
    const li = document.createElement('li');
    if (op.op === 'translate') li.textContent = `translate (${op.dx.toFixed(4)}, ${op.dy.toFixed(4)}) @ ${op.step}`;
    else if (op.op === 'scale') li.textContent = `scale x${op.factor.toFixed(4)} @ ${op.step}`;
    else if (op.op === 'replace') li.textContent = `replace loop @ ${op.step}`;
    else if (op.op === 'insert') li.textContent = `insert ${op.loops.length} loop(s) @ ${op.step}`;
    else li.textContent = `freeze upto ${op.upto}`;
    list.appendChild(li);
  }
}

function renderSessionTabs(): void {
  const tabs = el<HTMLDivElement>('session-tabs');
  tabs.innerHTML = '';
  sessions.forEach((s, i) => {
    const b = document.createElement('button');
    const sid = s.snapshot ? s.snapshot.session_id.slice(0, 8) : '?';
    b.textContent = `#${i + 1} ${sid}`;
    b.className = s === active ? 'tab active' : 'tab';
    b.addEventListener('click', () => {
      if (active) active.stopPolling();
      active = s;
      startPoll();
      repaint();
      refreshStagedList();
    });
    tabs.appendChild(b);
  });
}

function startPoll(): void {
  if (!active) return;
  const store = active;
  store.startPolling((snap) => {
    // another client may have stepped this session; adopt the server's tokens
    if (snap.step_count !== store.tokens.length) {
      store
        .syncFromServer()
        .then(() => {
          if (store === active) repaint();
        })
        .catch(() => undefined);
    }
    if (store === active) {
      el<HTMLSpanElement>('session-info').textContent =
        `${snap.session_id.slice(0, 8)} | ${snap.status} | step ${snap.step_count} | flags ${snap.flag_count}` +
        (snap.pending_edits ? ` | ${snap.pending_edits} pending` : '');
    }
  });
}

// --- top bar wiring -----------------------------------------------------------
el<HTMLButtonElement>('btn-load').addEventListener('click', async () => {
  try {
    const path = el<HTMLInputElement>('model-path').value.trim();
    model = await client.loadModel(path);
    el<HTMLSpanElement>('model-info').textContent =
      `${model.model_id.slice(0, 8)} | N=${model.config.n_points} | z dim ${model.config.latent_dim}`;
    setStatus('model loaded');
  } catch (err) {
    reportError(err);
  }
});

function parseZ(raw: string): string[] | { sample: number } | undefined {
  const text = raw.trim();
  if (!text) return undefined;
  if (text.startsWith('sample:')) return { sample: Number(text.slice(7)) };
  const arr = JSON.parse(text) as number[];
  return arr.map((v) => String(v));
}

function stopRuleFromForm(): StopRule {
  const type = el<HTMLSelectElement>('stop-type').value;
  if (type === 'plane_count') return { type: 'plane_count', k: Number(el<HTMLInputElement>('stop-k').value) };
  return { type: 'eos' };
}

el<HTMLButtonElement>('btn-create').addEventListener('click', async () => {
  if (!model) {
    setStatus('load a checkpoint first', true);
    return;
  }
  try {
    const store = new SessionStore(client, model);
    await store.create(stopRuleFromForm(), parseZ(el<HTMLInputElement>('z-input').value));
    sessions.push(store);
    if (active) active.stopPolling();
    active = store;
    startPoll();
    repaint();
    refreshStagedList();
    setStatus('session created');
  } catch (err) {
    reportError(err);
  }
});

function withActive(fn: (s: SessionStore) => Promise<unknown>): () => Promise<void> {
  return async () => {
    if (!active) {
      setStatus('no session', true);
      return;
    }
    try {
      await fn(active);
      repaint();
    } catch (err) {
      reportError(err);
    }
  };
}

el<HTMLButtonElement>('btn-step').addEventListener('click', withActive((s) => s.step(1)));
el<HTMLButtonElement>('btn-step-k').addEventListener(
  'click',
  withActive((s) => s.step(Math.max(1, Number(el<HTMLInputElement>('step-k').value)))),
);
el<HTMLButtonElement>('btn-run').addEventListener('click', withActive((s) => s.runToEnd()));
el<HTMLButtonElement>('btn-rewind').addEventListener(
  'click',
  withActive((s) => s.rewind(Math.max(0, Number(el<HTMLInputElement>('rewind-to').value)))),
);
el<HTMLButtonElement>('btn-fork').addEventListener('click', async () => {
  if (!active) {
    setStatus('no session', true);
    return;
  }
  try {
    const twin = await active.fork();
    sessions.push(twin);
    setStatus(`forked into ${twin.snapshot ? twin.snapshot.session_id.slice(0, 8) : '?'}`);
    renderSessionTabs();
  } catch (err) {
    reportError(err);
  }
});

el<HTMLButtonElement>('btn-apply').addEventListener(
  'click',
  withActive(async (s) => {
    await s.applyEdits();
    refreshStagedList();
    setStatus('edits applied');
  }),
);
el<HTMLButtonElement>('btn-discard').addEventListener('click', () => {
  if (active) active.discardStaged();
  refreshStagedList();
  setStatus('staged edits discarded');
});

// --- transplant panel ----------------------------------------------------------
let donor: ReturnType<typeof parseLoopSeq> | null = null;
el<HTMLInputElement>('donor-file').addEventListener('change', async (ev) => {
  const input = ev.target as HTMLInputElement;
  const file = input.files && input.files[0];
  if (!file) return;
  try {
    donor = parseLoopSeq(await file.text());
    el<HTMLSpanElement>('donor-info').textContent =
      `${donor.tokens.length} loops over ${donor.header.plane_count} planes`;
    setStatus('donor sequence loaded');
  } catch (err) {
    donor = null;
    reportError(err);
  }
});

el<HTMLButtonElement>('btn-transplant').addEventListener('click', () => {
  if (!active || !donor) {
    setStatus('need a session and a donor .loopseq', true);
    return;
  }
  try {
    const rangeText = el<HTMLInputElement>('donor-steps').value.trim();
    const m = rangeText.match(/^(\d+)(?:-(\d+))?$/);
    if (!m) throw new Error('donor steps must look like "3" or "3-5"');
    const lo = Number(m[1]);
    const hi = m[2] ? Number(m[2]) : lo;
    if (lo < 1 || hi > donor.tokens.length || lo > hi) throw new Error('donor step range out of bounds');
    const loops = donor.tokens.slice(lo - 1, hi).map((t) => {
      const pairs: number[][] = [];
      for (let i = 0; i + 1 < t.coords.length; i += 2) pairs.push([t.coords[i], t.coords[i + 1]]);
      return { loop: pairs, flag: t.level_up };
    });
    const atText = el<HTMLInputElement>('insert-at').value.trim();
    const op: EditOp = {
      op: 'insert',
      loops,
      step: atText ? Number(atText) : 'next',
    };
    active.stage(op);
    refreshStagedList();
    setStatus(`staged transplant of ${loops.length} loop(s)`);
  } catch (err) {
    reportError(err);
  }
});

setStatus('load a checkpoint to begin');
