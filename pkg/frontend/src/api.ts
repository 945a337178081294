/** Typed client over the inference service's versioned JSON API. */

export const SCHEMA_VERSION = "1";

export interface CodeSummary {
  grid: number[];
  indices: number[];
}

export interface EncodeResponse {
  schema_version: string;
  session: string;
  code: CodeSummary;
  reconstruction: string; // base64 PNG
}

export interface HeatmapData {
  shape: number[];
  probabilities: number[];
}

export interface InterveneResponse {
  schema_version: string;
  step: number;
  image: string;
  changed_nodes: number;
  adjacency: HeatmapData;
}

export interface AttributeResponse {
  schema_version: string;
  q: Record<string, number>;
  scores: Record<string, number>;
  chosen: string;
}

export interface ActionsResponse {
  schema_version: string;
  actions: string[];
  null_action: string;
}

export interface HistoryStep {
  step: number;
  action: string;
  image: string;
  changed_nodes: number;
}

export interface HistoryResponse {
  schema_version: string;
  session: string;
  steps: HistoryStep[];
}

export interface ModelResponse {
  schema_version: string;
  checkpoint: Record<string, unknown>;
  factors: [string, number][];
  image_size: number[];
  channels: number;
  masks: Record<string, HeatmapData>;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function request<T>(base: string, path: string, init?: RequestInit): Promise<T> {
  let res: Response;
  try {
    res = await fetch(base + path, init);
  } catch (err) {
    throw new ApiError(0, `service unreachable: ${String(err)}`);
  }
  const body = await res.json().catch(() => ({}));
  if (!res.ok) {
    throw new ApiError(res.status, (body as { error?: string }).error ?? res.statusText);
  }
  return body as T;
}

function post<T>(base: string, path: string, payload: unknown): Promise<T> {
  return request<T>(base, path, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(payload),
  });
}

export class ServiceClient {
  constructor(public base: string) {}

  encode(imageB64: string): Promise<EncodeResponse> {
    return post(this.base, "/encode", { schema_version: SCHEMA_VERSION, image: imageB64 });
  }

  intervene(session: string, action: string, seed = 0, samples = 1): Promise<InterveneResponse> {
    return post(this.base, `/sessions/${session}/intervene`, {
      schema_version: SCHEMA_VERSION,
      action,
      seed,
      samples,
    });
  }

  attribute(imageX: string, imageY: string, seed = 0): Promise<AttributeResponse> {
    return post(this.base, "/attribute", {
      schema_version: SCHEMA_VERSION,
      image_x: imageX,
      image_y: imageY,
      seed,
    });
  }

  actions(): Promise<ActionsResponse> {
    return request(this.base, "/actions");
  }

  model(): Promise<ModelResponse> {
    return request(this.base, "/model");
  }

  history(session: string): Promise<HistoryResponse> {
    return request(this.base, `/sessions/${session}/history`);
  }
}

/** Data URI for an image delivered as base64 PNG; the bytes are used verbatim. */
export function pngDataUri(b64: string): string {
  return `data:image/png;base64,${b64}`;
}
