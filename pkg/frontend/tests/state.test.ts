import { afterEach, describe, expect, it, vi } from 'vitest';
import { ApiError, type Client } from '../src/api.js';
import { diffRender, SessionStore, type RenderState } from '../src/state.js';
import type { EditOp, ModelInfo, SessionSnapshot, StepResponse, TokenRecord } from '../src/types.js';

const model: ModelInfo = {
  model_id: 'model-1',
  config: { n_points: 4, latent_dim: 8, max_seq_len: 16 },
  step: 100,
  has_plane_schedule: true,
};

function snapshot(overrides: Partial<SessionSnapshot> = {}): SessionSnapshot {
  return {
    session_id: 'sess-1',
    model_id: 'model-1',
    status: 'running',
    stop_rule: { type: 'plane_count', k: 2 },
    step_count: 0,
    flag_count: 0,
    frozen_upto: 0,
    pending_edits: 0,
    applied_edits: 0,
    z: ['0', '0', '0', '0', '0', '0', '0', '0'],
    created_at: 't0',
    updated_at: 't0',
    ...overrides,
  };
}

function tokenRecord(step: number, flag: number, fill: string): TokenRecord {
  return {
    step_index: step,
    coords: [fill, '0.0', '0.0', fill, `-${fill}`, '0.0', '0.0', `-${fill}`],
    level_up: flag,
    raw_flag_prob: '0.9',
    source: 'model',
    status: 'running',
  };
}

function stepResponse(tokens: TokenRecord[], stepCount: number): StepResponse {
  return { new_tokens: tokens, status: 'running', step_count: stepCount };
}

function loopsDoc(tokens: { coords: number[]; level_up: number }[]): string {
  const header = { version: 1, N: 4, plane_count: 2, axis: null, plane_origins: null, plane_normal: null };
  return [JSON.stringify(header), ...tokens.map((t) => JSON.stringify(t))].join('\n') + '\n';
}

const coordsOf = (fill: number) => [fill, 0, 0, fill, -fill, 0, 0, -fill];

/** Minimal fake service; individual tests override methods. */
function fakeClient(): Client & { calls: string[] } {
  const calls: string[] = [];
  const stub = {
    calls,
    createSession: async () => {
      calls.push('create');
      return snapshot();
    },
    getSession: async () => {
      calls.push('get');
      return snapshot();
    },
    step: async () => {
      calls.push('step');
      return stepResponse([], 0);
    },
    runToEnd: async () => {
      calls.push('run');
      return stepResponse([], 0);
    },
    postEdits: async () => {
      calls.push('edits');
      return { accepted: 1, status: 'running' as const, pending_edits: 0 };
    },
    rewind: async (_id: string, toStep: number) => {
      calls.push('rewind');
      return snapshot({ step_count: toStep });
    },
    fork: async () => {
      calls.push('fork');
      return snapshot({ session_id: 'sess-2' });
    },
    fetchLoops: async () => {
      calls.push('loops');
      return loopsDoc([]);
    },
  };
  return stub as unknown as Client & { calls: string[] };
}

afterEach(() => {
  vi.useRealTimers();
});

describe('SessionStore basics', () => {
  it('creates a session and starts empty', async () => {
    const store = new SessionStore(fakeClient(), model);
    const snap = await store.create({ type: 'plane_count', k: 2 });
    expect(snap.session_id).toBe('sess-1');
    expect(store.tokens).toEqual([]);
    expect(store.status).toBe('running');
  });

  it('absorbs step responses as numeric tokens', async () => {
    const client = fakeClient();
    client.step = async () =>
      stepResponse([tokenRecord(1, 1, '0.25'), tokenRecord(2, 0, '0.5')], 2);
    const store = new SessionStore(client, model);
    await store.create({ type: 'plane_count', k: 2 });
    await store.step(2);
    expect(store.tokens).toHaveLength(2);
    expect(store.tokens[0].coords).toEqual(coordsOf(0.25));
    expect(store.tokens[0].level_up).toBe(1);
    expect(store.tokens[1].source).toBe('model');
    expect(store.snapshot?.step_count).toBe(2);
  });

  it('requires a session before stepping', async () => {
    const store = new SessionStore(fakeClient(), model);
    await expect(store.step()).rejects.toThrow(/no session/);
  });
});

describe('edits', () => {
  async function storeWithTwoTokens(client = fakeClient()) {
    client.step = async () =>
      stepResponse([tokenRecord(1, 1, '0.25'), tokenRecord(2, 0, '0.5')], 2);
    const store = new SessionStore(client, model);
    await store.create({ type: 'plane_count', k: 2 });
    await store.step(2);
    return store;
  }

  it('posts staged edits and re-syncs tokens from /loops', async () => {
    const client = fakeClient();
    const posted: EditOp[][] = [];
    client.postEdits = async (_id: string, ops: EditOp[]) => {
      posted.push(ops);
      return { accepted: ops.length, status: 'running', pending_edits: 0 };
    };
    // the server applied the translate: first loop shifted in x
    client.fetchLoops = async () =>
      loopsDoc([
        { coords: [0.45, 0, 0.2, 0.25, -0.05, 0, 0.2, -0.25], level_up: 1 },
        { coords: coordsOf(0.5), level_up: 0 },
      ]);
    const store = await storeWithTwoTokens(client);
    store.stage({ op: 'translate', dx: 0.2, dy: 0, step: 1 });
    await store.applyEdits();
    expect(posted).toEqual([[{ op: 'translate', dx: 0.2, dy: 0, step: 1 }]]);
    expect(store.stagedEdits).toEqual([]);
    expect(store.tokens[0].coords[0]).toBe(0.45);
    expect(store.editedSteps.has(1)).toBe(true);
    expect(store.firstEdit).toBe(1);
  });

  it('does not post an empty batch', async () => {
    const store = await storeWithTwoTokens();
    await store.applyEdits();
    expect((store.client as Client & { calls: string[] }).calls).not.toContain('edits');
  });

  it('marks the next step for pending-style edits', async () => {
    const client = fakeClient();
    client.fetchLoops = async () =>
      loopsDoc([
        { coords: coordsOf(0.25), level_up: 1 },
        { coords: coordsOf(0.5), level_up: 0 },
      ]);
    const store = await storeWithTwoTokens(client);
    await store.applyEdits([{ op: 'scale', factor: 2, step: 'next' }]);
    expect(store.editedSteps.has(3)).toBe(true);
    expect(store.firstEdit).toBe(3);
  });

  it('shifts edit bookkeeping around a past insert', async () => {
    const client = fakeClient();
    client.fetchLoops = async () =>
      loopsDoc([
        { coords: coordsOf(0.25), level_up: 1 },
        { coords: coordsOf(0.1), level_up: 0 },
        { coords: coordsOf(0.5), level_up: 0 },
      ]);
    const store = await storeWithTwoTokens(client);
    const loop = [[0.1, 0], [0, 0.1], [-0.1, 0], [0, -0.1]];
    await store.applyEdits([
      { op: 'translate', dx: 0.1, dy: 0, step: 2 },
      { op: 'insert', loops: [{ loop, flag: 0 }], step: 2 },
    ]);
    // the translate at old step 2 now lives at step 3; the insert occupies step 2
    expect([...store.editedSteps].sort()).toEqual([2, 3]);
    expect(store.firstEdit).toBe(2);
    expect(store.tokens).toHaveLength(3);
  });

  it('treats empty-sequence responses as zero tokens', async () => {
    const client = fakeClient();
    client.fetchLoops = async () => {
      throw new ApiError(409, { code: 'empty_sequence', message: 'no tokens yet' });
    };
    const store = new SessionStore(client, model);
    await store.create({ type: 'plane_count', k: 2 });
    await store.applyEdits([{ op: 'translate', dx: 0.1, dy: 0, step: 'next' }]);
    expect(store.tokens).toEqual([]);
  });
});

describe('rewind and fork', () => {
  it('rewind truncates local tokens and edit marks', async () => {
    const client = fakeClient();
    client.step = async () =>
      stepResponse([tokenRecord(1, 1, '0.1'), tokenRecord(2, 0, '0.2'), tokenRecord(3, 0, '0.3')], 3);
    const store = new SessionStore(client, model);
    await store.create({ type: 'plane_count', k: 2 });
    await store.step(3);
    store.editedSteps = new Set([1, 3]);
    store.firstEdit = 1;
    await store.rewind(1);
    expect(store.tokens).toHaveLength(1);
    expect([...store.editedSteps]).toEqual([1]);
    expect(store.firstEdit).toBe(1);
    await store.rewind(0);
    expect(store.tokens).toEqual([]);
    expect(store.firstEdit).toBeNull();
  });

  it('fork clones local state into an independent store', async () => {
    const client = fakeClient();
    client.step = async () => stepResponse([tokenRecord(1, 1, '0.1')], 1);
    const store = new SessionStore(client, model);
    await store.create({ type: 'plane_count', k: 2 });
    await store.step();
    store.editedSteps.add(1);
    const twin = await store.fork();
    expect(twin.snapshot?.session_id).toBe('sess-2');
    expect(twin.tokens).toHaveLength(1);
    twin.tokens[0].coords[0] = 999;
    twin.editedSteps.add(2);
    expect(store.tokens[0].coords[0]).toBe(0.1);
    expect(store.editedSteps.has(2)).toBe(false);
  });
});

describe('rendering and diff', () => {
  it('renderState walks planes and classifies loops', async () => {
    const client = fakeClient();
    client.step = async () =>
      stepResponse([tokenRecord(1, 1, '0.1'), tokenRecord(2, 0, '0.2'), tokenRecord(3, 1, '0.3')], 3);
    const store = new SessionStore(client, model);
    await store.create({ type: 'plane_count', k: 2 });
    await store.step(3);
    store.editedSteps.add(2);
    store.firstEdit = 2;
    const render = store.renderState();
    expect(render.planeCount).toBe(2);
    expect(render.loops.map((l) => l.plane)).toEqual([0, 0, 1]);
    expect(render.loops.map((l) => l.cls)).toEqual(['original', 'edited', 'regenerated']);
    expect(render.loops[0].points[0]).toEqual([0.1, 0]);
  });

  it('diffRender is empty only for structurally identical renders', () => {
    const a: RenderState = {
      planeCount: 1,
      loops: [{ plane: 0, step: 1, points: [[0, 0], [1, 0], [1, 1]], cls: 'original' }],
    };
    const same: RenderState = {
      planeCount: 1,
      loops: [{ plane: 0, step: 1, points: [[0, 0], [1, 0], [1, 1]], cls: 'edited' }],
    };
    expect(diffRender(a, same)).toEqual([]); // styling does not count
    const moved = structuredClone(same);
    moved.loops[0].points[2] = [1, 1.0000001];
    expect(diffRender(a, moved)).toEqual(['loop 0: point 2 differs']);
    expect(diffRender(a, { planeCount: 2, loops: [] })).toHaveLength(2);
  });

  it('refetchDiff returns no differences when server and client agree', async () => {
    const client = fakeClient();
    client.step = async () =>
      stepResponse([tokenRecord(1, 1, '0.25'), tokenRecord(2, 0, '0.5')], 2);
    client.fetchLoops = async () =>
      loopsDoc([
        { coords: coordsOf(0.25), level_up: 1 },
        { coords: coordsOf(0.5), level_up: 0 },
      ]);
    const store = new SessionStore(client, model);
    await store.create({ type: 'plane_count', k: 2 });
    await store.step(2);
    expect(await store.refetchDiff()).toEqual([]);
  });

  it('refetchDiff reports drift', async () => {
    const client = fakeClient();
    client.step = async () => stepResponse([tokenRecord(1, 1, '0.25')], 1);
    client.fetchLoops = async () => loopsDoc([{ coords: coordsOf(0.26), level_up: 1 }]);
    const store = new SessionStore(client, model);
    await store.create({ type: 'plane_count', k: 2 });
    await store.step();
    expect(await store.refetchDiff()).not.toEqual([]);
  });
});

describe('request discipline', () => {
  it('holds mutating requests to one in flight', async () => {
    const client = fakeClient();
    let inFlight = 0;
    let maxInFlight = 0;
    const gates: (() => void)[] = [];
    client.step = async () => {
      inFlight += 1;
      maxInFlight = Math.max(maxInFlight, inFlight);
      await new Promise<void>((resolve) => gates.push(resolve));
      inFlight -= 1;
      return stepResponse([tokenRecord(1, 1, '0.1')], 1);
    };
    const store = new SessionStore(client, model);
    await store.create({ type: 'plane_count', k: 2 });
    const p1 = store.step();
    const p2 = store.step();
    const p3 = store.runToEnd();
    await new Promise((r) => setTimeout(r, 10));
    expect(gates).toHaveLength(1); // only the first request reached the service
    gates.shift()!();
    await p1;
    await new Promise((r) => setTimeout(r, 10));
    gates.shift()!();
    await p2;
    client.runToEnd = async () => stepResponse([], 3);
    await p3.catch(() => undefined);
    expect(maxInFlight).toBe(1);
  });

  it('keeps the queue alive after a failed mutation', async () => {
    const client = fakeClient();
    let first = true;
    client.step = async () => {
      if (first) {
        first = false;
        throw new ApiError(409, { code: 'done', message: 'already finished' });
      }
      return stepResponse([tokenRecord(1, 1, '0.1')], 1);
    };
    const store = new SessionStore(client, model);
    await store.create({ type: 'plane_count', k: 2 });
    await expect(store.step()).rejects.toThrow(/already finished/);
    await store.step();
    expect(store.tokens).toHaveLength(1);
  });

  it('polls the session on an interval and skips while mutating', async () => {
    vi.useFakeTimers();
    const client = fakeClient();
    let gets = 0;
    client.getSession = async () => {
      gets += 1;
      return snapshot({ step_count: 0 });
    };
    let release: () => void = () => undefined;
    client.step = async () => {
      await new Promise<void>((resolve) => {
        release = resolve;
      });
      return stepResponse([], 0);
    };
    const store = new SessionStore(client, model);
    await store.create({ type: 'plane_count', k: 2 });
    const updates: number[] = [];
    store.startPolling((snap) => updates.push(snap.step_count), 500);
    await vi.advanceTimersByTimeAsync(1100);
    expect(gets).toBe(2);
    const pending = store.step(); // occupies the mutation slot
    await vi.advanceTimersByTimeAsync(10); // let the mutation start
    await vi.advanceTimersByTimeAsync(1000); // two ticks while mutating
    expect(gets).toBe(2);
    release();
    await pending;
    await vi.advanceTimersByTimeAsync(500);
    expect(gets).toBe(3);
    store.stopPolling();
    await vi.advanceTimersByTimeAsync(2000);
    expect(gets).toBe(3);
    expect(updates).toHaveLength(3);
  });
});
