export type StopRule =
  | { type: 'plane_count'; k: number }
  | { type: 'eos'; eps?: number };

export type SessionStatus = 'running' | 'done' | 'aborted';

export interface SessionSnapshot {
  session_id: string;
  model_id: string;
  status: SessionStatus;
  stop_rule: StopRule;
  step_count: number;
  flag_count: number;
  frozen_upto: number;
  pending_edits: number;
  applied_edits: number;
  z: string[];
  created_at: string;
  updated_at: string;
}

export interface TokenRecord {
  step_index: number;
  coords: string[];
  level_up: number;
  raw_flag_prob: string;
  source: 'model' | 'inserted';
  status: string;
}

export interface StepResponse {
  new_tokens: TokenRecord[];
  status: SessionStatus;
  step_count: number;
}

export interface EditAck {
  accepted: number;
  status: SessionStatus;
  pending_edits: number;
}

export interface ModelInfo {
  model_id: string;
  config: {
    n_points: number;
    latent_dim: number;
    max_seq_len: number;
    [key: string]: unknown;
  };
  step: number;
  has_plane_schedule: boolean;
}

export interface PointsPayload {
  count: number;
  points: string[][];
  normals: string[][];
}

export interface InterpolateResponse {
  count: number;
  sequences: { status: SessionStatus; loopseq: string }[];
}

export type EditOp =
  | { op: 'translate'; dx: number; dy: number; step?: number | 'next' }
  | { op: 'scale'; factor: number; step?: number | 'next' }
  | { op: 'replace'; loop: number[][]; flag?: number; step?: number | 'next' }
  | { op: 'insert'; loops: { loop: number[][]; flag?: number }[]; step?: number | 'next' }
  | { op: 'freeze'; upto: number };

export interface ServiceErrorBody {
  code: string;
  message: string;
  field?: string;
}
