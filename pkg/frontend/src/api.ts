/**
 * Typed client for the tagging/classification API.
 *
 * Wire format (shared contract with the backing service):
 *   POST {base}/api/v1/tag/{model}       {"text": ...} -> TagResponse
 *   POST {base}/api/v1/classify/{model}  {"text": ...} -> ClassifyResponse
 *   GET  {base}/api/v1/health            -> HealthResponse
 * Errors arrive as {"error": {"code", "message"}} with a non-2xx status.
 */

export interface TagSpan {
  type: string;
  start: number;
  end: number;
  charStart: number;
  charEnd: number;
}

export interface TagResponse {
  model: string;
  tokens: string[];
  labels: string[];
  spans: TagSpan[];
}

export interface ClassifyResponse {
  model: string;
  label: string;
  scores: Record<string, number>;
}

export interface ApiErrorBody {
  error: { code: string; message: string };
}

export type ModelKind = "tagger" | "classifier";

export interface HealthResponse {
  status: string;
  models: Record<string, ModelKind>;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(readonly status: number, readonly body: ApiErrorBody) {
    super(body.error.message);
    this.name = "ApiError";
  }
}

export function isErrorBody(value: unknown): value is ApiErrorBody {
  const candidate = value as ApiErrorBody;
  return (
    typeof candidate === "object" &&
    candidate !== null &&
    typeof candidate.error === "object" &&
    candidate.error !== null &&
    typeof candidate.error.code === "string" &&
    typeof candidate.error.message === "string"
  );
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async post<T>(path: string, payload: unknown): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
    const body = await response.json();
    if (!response.ok) {
      const envelope: ApiErrorBody = isErrorBody(body)
        ? body
        : { error: { code: "unexpected", message: `HTTP ${response.status}` } };
      throw new ApiError(response.status, envelope);
    }
    return body as T;
  }

  async health(): Promise<HealthResponse> {
    const response = await this.fetchFn(`${this.baseUrl}/api/v1/health`);
    if (!response.ok) {
      throw new ApiError(response.status, {
        error: { code: "unhealthy", message: `HTTP ${response.status}` },
      });
    }
    return (await response.json()) as HealthResponse;
  }

  tag(model: string, text: string): Promise<TagResponse> {
    return this.post<TagResponse>(`/api/v1/tag/${encodeURIComponent(model)}`, { text });
  }

  classify(model: string, text: string): Promise<ClassifyResponse> {
    return this.post<ClassifyResponse>(`/api/v1/classify/${encodeURIComponent(model)}`, {
      text,
    });
  }
}
