import type {
  EditAck,
  EditOp,
  InterpolateResponse,
  ModelInfo,
  PointsPayload,
  ServiceErrorBody,
  SessionSnapshot,
  StepResponse,
  StopRule,
} from './types.js';

export class ApiError extends Error {
  constructor(public status: number, public body: ServiceErrorBody) {
    super(`${body.code}: ${body.message}`);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Thin typed wrapper over the session service; every mutation goes through here. */
export class Client {
  constructor(private base: string, private fetchFn: FetchLike = fetch) {
    this.base = base.replace(/\/+$/, '');
  }

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const resp = await this.fetchFn(this.base + path, init);
    if (!resp.ok) {
      let body: ServiceErrorBody;
      try {
        body = (await resp.json()) as ServiceErrorBody;
      } catch {
        body = { code: 'http_error', message: `HTTP ${resp.status}` };
      }
      throw new ApiError(resp.status, body);
    }
    return resp;
  }

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.request(path, init);
    return (await resp.json()) as T;
  }

  private post<T>(path: string, body?: unknown): Promise<T> {
    return this.json<T>(path, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
  }

  loadModel(checkpointPath: string): Promise<ModelInfo> {
    return this.post('/models/load', { checkpoint_path: checkpointPath });
  }

  createSession(req: {
    model_id: string;
    stop_rule: StopRule;
    z?: string[] | number[] | { sample: number };
  }): Promise<SessionSnapshot> {
    return this.post('/sessions', req);
  }

  getSession(id: string): Promise<SessionSnapshot> {
    return this.json(`/sessions/${id}`);
  }

  step(id: string, count = 1): Promise<StepResponse> {
    return this.post(`/sessions/${id}/step`, { count });
  }

  runToEnd(id: string): Promise<StepResponse> {
    return this.post(`/sessions/${id}/run`);
  }

  postEdits(id: string, ops: EditOp[]): Promise<EditAck> {
    return this.post(`/sessions/${id}/edits`, { edits: ops });
  }

  rewind(id: string, toStep: number): Promise<SessionSnapshot> {
    return this.post(`/sessions/${id}/rewind`, { to_step: toStep });
  }

  fork(id: string): Promise<SessionSnapshot> {
    return this.post(`/sessions/${id}/fork`);
  }

  /** Raw .loopseq text; kept as text so byte-level comparisons stay possible. */
  async fetchLoops(id: string): Promise<string> {
    const resp = await this.request(`/sessions/${id}/loops`);
    return resp.text();
  }

  fetchPoints(id: string, density?: number): Promise<PointsPayload> {
    const q = density === undefined ? '' : `?density=${density}`;
    return this.json(`/sessions/${id}/points${q}`);
  }

  interpolate(req: {
    model_id: string;
    z_a: string[] | number[];
    z_b: string[] | number[];
    k: number;
    stop_rule?: StopRule;
  }): Promise<InterpolateResponse> {
    return this.post('/interpolate', req);
  }
}
