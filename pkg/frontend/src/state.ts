import { ApiError, Client } from './api.js';
import { classifySteps, type LoopClass } from './colors.js';
import { loopOf, parseLoopSeq, planeOfTokens, type LoopSeqHeader, type LoopToken, type Pt } from './loopseq.js';
import type { EditOp, ModelInfo, SessionSnapshot, StepResponse, StopRule } from './types.js';

export interface RenderLoop {
  plane: number;
  step: number; // 1-based emission index
  points: Pt[];
  cls: LoopClass;
}

export interface RenderState {
  planeCount: number;
  loops: RenderLoop[];
}

/** Structural differences between two renders, ignoring styling; [] means identical. */
export function diffRender(a: RenderState, b: RenderState): string[] {
  const out: string[] = [];
  if (a.planeCount !== b.planeCount) {
    out.push(`plane count ${a.planeCount} != ${b.planeCount}`);
  }
  if (a.loops.length !== b.loops.length) {
    out.push(`loop count ${a.loops.length} != ${b.loops.length}`);
    return out;
  }
  for (let i = 0; i < a.loops.length; i++) {
    const la = a.loops[i];
    const lb = b.loops[i];
    if (la.plane !== lb.plane) out.push(`loop ${i}: plane ${la.plane} != ${lb.plane}`);
    if (la.points.length !== lb.points.length) {
      out.push(`loop ${i}: point count ${la.points.length} != ${lb.points.length}`);
      continue;
    }
    for (let j = 0; j < la.points.length; j++) {
      if (la.points[j][0] !== lb.points[j][0] || la.points[j][1] !== lb.points[j][1]) {
        out.push(`loop ${i}: point ${j} differs`);
        break;
      }
    }
  }
  return out;
}

interface LocalToken extends LoopToken {
  source: 'model' | 'inserted';
}

/**
 * Client-side session mirror: server snapshot plus view state.  Every token
 * shown comes from the service; edits stage locally and only apply via POST.
 * Mutating requests serialize through a promise queue so at most one is in
 * flight per session.
 */
export class SessionStore {
  snapshot: SessionSnapshot | null = null;
  tokens: LocalToken[] = [];
  editedSteps = new Set<number>();
  firstEdit: number | null = null;
  lastHeader: LoopSeqHeader | null = null;

  // view state
  selectedPlane = 0;
  selectedLoopStep: number | null = null;
  stagedEdits: EditOp[] = [];
  comparison: RenderState | null = null;

  private queue: Promise<unknown> = Promise.resolve();
  private mutating = false;
  private pollTimer: ReturnType<typeof setInterval> | null = null;

  constructor(public client: Client, public model: ModelInfo) {}

  get id(): string {
    if (!this.snapshot) throw new Error('no session yet');
    return this.snapshot.session_id;
  }

  get status(): string {
    return this.snapshot ? this.snapshot.status : 'none';
  }

  /** Serialize mutations: each waits for the previous one to settle. */
  private enqueue<T>(fn: () => Promise<T>): Promise<T> {
    const next = this.queue.then(
      async () => {
        this.mutating = true;
        try {
          return await fn();
        } finally {
          this.mutating = false;
        }
      },
    );
    this.queue = next.catch(() => undefined);
    return next;
  }

  create(stopRule: StopRule, z?: string[] | number[] | { sample: number }): Promise<SessionSnapshot> {
    return this.enqueue(async () => {
      this.snapshot = await this.client.createSession({
        model_id: this.model.model_id,
        stop_rule: stopRule,
        ...(z === undefined ? {} : { z }),
      });
      this.tokens = [];
      this.editedSteps.clear();
      this.firstEdit = null;
      this.stagedEdits = [];
      return this.snapshot;
    });
  }

  private absorb(resp: StepResponse): StepResponse {
    for (const rec of resp.new_tokens) {
      this.tokens.push({
        coords: rec.coords.map(Number),
        level_up: rec.level_up,
        source: rec.source,
      });
    }
    if (this.snapshot) {
      this.snapshot = { ...this.snapshot, status: resp.status, step_count: resp.step_count };
    }
    return resp;
  }

  step(count = 1): Promise<StepResponse> {
    return this.enqueue(async () => this.absorb(await this.client.step(this.id, count)));
  }

  runToEnd(): Promise<StepResponse> {
    return this.enqueue(async () => this.absorb(await this.client.runToEnd(this.id)));
  }

  stage(op: EditOp): void {
    this.stagedEdits.push(op);
  }

  discardStaged(): void {
    this.stagedEdits = [];
  }

  /** POST edits, record which steps they touched, then re-sync from /loops. */
  applyEdits(ops?: EditOp[]): Promise<void> {
    const batch = ops ?? this.stagedEdits.slice();
    return this.enqueue(async () => {
      if (batch.length === 0) return;
      await this.client.postEdits(this.id, batch);
      if (ops === undefined) this.stagedEdits = [];
      for (const op of batch) {
        if (op.op === 'freeze') continue;
        const emitted = this.tokens.length;
        const step =
          op.step === undefined || op.step === 'next'
            ? emitted + 1
            : op.step;
        if (op.op === 'insert' && step <= emitted) {
          const m = op.loops.length;
          const shifted = new Set<number>();
          for (const e of this.editedSteps) shifted.add(e < step ? e : e + m);
          this.editedSteps = shifted;
          if (this.firstEdit !== null && this.firstEdit >= step) this.firstEdit += m;
          for (let j = 0; j < m; j++) this.editedSteps.add(step + j);
        } else {
          this.editedSteps.add(step);
        }
        this.firstEdit = this.firstEdit === null ? step : Math.min(this.firstEdit, step);
      }
      await this.syncFromServer();
    });
  }

  rewind(toStep: number): Promise<SessionSnapshot> {
    return this.enqueue(async () => {
      this.snapshot = await this.client.rewind(this.id, toStep);
      this.tokens = this.tokens.slice(0, toStep);
      const kept = new Set<number>();
      for (const e of this.editedSteps) if (e <= toStep) kept.add(e);
      this.editedSteps = kept;
      this.firstEdit = kept.size ? Math.min(...kept) : null;
      return this.snapshot;
    });
  }

  /** Duplicate server session and local mirror for side-by-side what-ifs. */
  fork(): Promise<SessionStore> {
    return this.enqueue(async () => {
      const snap = await this.client.fork(this.id);
      const twin = new SessionStore(this.client, this.model);
      twin.snapshot = snap;
      twin.tokens = this.tokens.map((t) => ({ ...t, coords: t.coords.slice() }));
      twin.editedSteps = new Set(this.editedSteps);
      twin.firstEdit = this.firstEdit;
      twin.selectedPlane = this.selectedPlane;
      return twin;
    });
  }

  /** Adopt the server's token list wholesale; local sources/styling survive. */
  async syncFromServer(): Promise<void> {
    let text: string;
    try {
      text = await this.client.fetchLoops(this.id);
    } catch (err) {
      if (err instanceof ApiError && err.body.code === 'empty_sequence') {
        this.tokens = [];
        return;
      }
      throw err;
    }
    const parsed = parseLoopSeq(text);
    this.lastHeader = parsed.header;
    const sources = this.tokens.map((t) => t.source);
    this.tokens = parsed.tokens.map((t, i) => ({
      coords: t.coords,
      level_up: t.level_up,
      source: sources[i] ?? 'model',
    }));
    const snap = await this.client.getSession(this.id);
    this.snapshot = snap;
  }

  planeCount(): number {
    const rule = this.snapshot?.stop_rule;
    if (rule && rule.type === 'plane_count') return rule.k;
    let flags = 0;
    for (const t of this.tokens) flags += t.level_up;
    return flags;
  }

  renderState(): RenderState {
    const planes = planeOfTokens(this.tokens);
    const classes = classifySteps(
      this.tokens.map((t) => t.source),
      this.editedSteps,
      this.firstEdit,
    );
    return {
      planeCount: this.planeCount(),
      loops: this.tokens.map((t, i) => ({
        plane: planes[i],
        step: i + 1,
        points: loopOf(t),
        cls: classes[i],
      })),
    };
  }

  /** Consistency check: re-fetch /loops and diff against the current render. */
  async refetchDiff(): Promise<string[]> {
    let text: string;
    try {
      text = await this.client.fetchLoops(this.id);
    } catch (err) {
      if (err instanceof ApiError && err.body.code === 'empty_sequence') {
        return this.tokens.length === 0 ? [] : ['server empty, client has tokens'];
      }
      throw err;
    }
    const parsed = parseLoopSeq(text);
    const planes = planeOfTokens(parsed.tokens);
    const fetched: RenderState = {
      planeCount: parsed.header.plane_count,
      loops: parsed.tokens.map((t, i) => ({
        plane: planes[i],
        step: i + 1,
        points: loopOf(t),
        cls: 'original' as LoopClass,
      })),
    };
    return diffRender(this.renderState(), fetched);
  }

  startPolling(onUpdate: (snap: SessionSnapshot) => void, intervalMs = 500): void {
    this.stopPolling();
    this.pollTimer = setInterval(async () => {
      if (this.mutating || !this.snapshot) return;
      try {
        const snap = await this.client.getSession(this.id);
        this.snapshot = snap;
        onUpdate(snap);
      } catch {
        // transient poll failures surface on the next tick
      }
    }, intervalMs);
  }

  stopPolling(): void {
    if (this.pollTimer !== null) {
      clearInterval(this.pollTimer);
      this.pollTimer = null;
    }
  }
}
