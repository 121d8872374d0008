// Typed client for the motion service; the payload contract is docs/api.md.

export interface SkeletonInfo {
  skeleton_id: string;
  joint_names: string[];
  parent_index: number[];
  edges: [number, number][];
  up_axis: "y" | "z";
  feature_dim: number;
  max_frames: number;
}

export interface SessionInfo {
  session_id: string;
  skeleton_id: string;
  seed: number;
}

export interface GeneratePayload {
  text?: string;
  task?: string;
  frames?: number;
  prefix_frames?: number;
  suffix_frames?: number;
  waypoints?: [number, number][];
  speech_ref?: string;
  music_ref?: string;
  reference_clip?: string;
}

export interface GenerateResponse {
  clip_id: string;
  clip_index: number;
  frame_count: number;
  caption: string | null;
  task: string;
  positions: number[][][];
  feature_ref: string;
}

export interface TimelineCard {
  clip_index: number;
  clip_id: string;
  caption: string | null;
  task: string;
  frames: number;
  seed: number;
}

export interface TimelineResponse {
  session_id: string;
  clips: TimelineCard[];
  total_frames: number;
  root_path: [number, number][];
}

export interface ApiErrorBody {
  error: { code: string; message: string; fields: string[] };
}

export class ServiceError extends Error {
  code: string;
  fields: string[];
  status: number;

  constructor(status: number, body: ApiErrorBody["error"]) {
    super(body.message);
    this.status = status;
    this.code = body.code;
    this.fields = body.fields ?? [];
  }
}

async function request<T>(base: string, path: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(base + path, init);
  if (!resp.ok) {
    let body: ApiErrorBody | null = null;
    try {
      body = (await resp.json()) as ApiErrorBody;
    } catch {
      /* non-JSON error body */
    }
    if (body && body.error) throw new ServiceError(resp.status, body.error);
    throw new ServiceError(resp.status, {
      code: "http_error",
      message: `HTTP ${resp.status}`,
      fields: [],
    });
  }
  return (await resp.json()) as T;
}

export class MotionApi {
  constructor(public base: string = "") {}

  health(): Promise<{ status: string; version: string; checkpoint: string }> {
    return request(this.base, "/api/health");
  }

  skeleton(): Promise<SkeletonInfo> {
    return request(this.base, "/api/skeleton");
  }

  createSession(skeletonId: string, seed: number): Promise<SessionInfo> {
    return request(this.base, "/api/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ skeleton_id: skeletonId, seed }),
    });
  }

  generate(sessionId: string, payload: GeneratePayload): Promise<GenerateResponse> {
    return request(this.base, `/api/sessions/${sessionId}/generate`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  timeline(sessionId: string): Promise<TimelineResponse> {
    return request(this.base, `/api/sessions/${sessionId}/timeline`);
  }
}
