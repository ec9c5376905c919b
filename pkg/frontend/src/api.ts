/** Thin typed client for the backend /api endpoints.
 *
 * The transport is injectable so tests (and non-browser hosts) can run
 * against a fake; the default is the global fetch.
 */

import type {
  AnnotationDocumentJson,
  ApiErrorBody,
  PyramidJson,
  ScoreJson,
  SlideJson,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  readonly status: number;
  readonly code: string;

  constructor(status: number, code: string, message: string) {
    super(message);
    this.status = status;
    this.code = code;
  }
}

async function parseError(response: Response): Promise<ApiError> {
  let code = "invalid_input";
  let message = response.statusText;
  try {
    const body = (await response.json()) as ApiErrorBody;
    code = body.error.code;
    message = body.error.message;
  } catch {
    // non-JSON error body; keep the defaults
  }
  return new ApiError(response.status, code, message);
}

export class ApiClient {
  private readonly base: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl = "", fetchFn: FetchLike = (...args) => fetch(...args)) {
    this.base = baseUrl.replace(/\/$/, "");
    this.fetchFn = fetchFn;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.base}${path}`, init);
    if (!response.ok) {
      throw await parseError(response);
    }
    return (await response.json()) as T;
  }

  listSlides(): Promise<SlideJson[]> {
    return this.request("/api/slides");
  }

  getSlide(slideId: string): Promise<SlideJson> {
    return this.request(`/api/slides/${encodeURIComponent(slideId)}`);
  }

  getPyramid(slideId: string): Promise<PyramidJson> {
    return this.request(`/api/slides/${encodeURIComponent(slideId)}/pyramid`);
  }

  tileUrl(slideId: string, level: number, tx: number, ty: number): string {
    return `${this.base}/api/slides/${encodeURIComponent(slideId)}/tiles/${level}/${tx}_${ty}`;
  }

  getAnnotations(key: string, version?: number): Promise<AnnotationDocumentJson> {
    const query = version === undefined ? "" : `?version=${version}`;
    return this.request(`/api/patches/${encodeURIComponent(key)}/annotations${query}`);
  }

  putAnnotations(key: string, doc: AnnotationDocumentJson): Promise<{ version: number }> {
    return this.request(`/api/patches/${encodeURIComponent(key)}/annotations`, {
      method: "PUT",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(doc),
    });
  }

  presegment(key: string, predictionFile?: string): Promise<AnnotationDocumentJson> {
    return this.request(`/api/patches/${encodeURIComponent(key)}/presegment`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(predictionFile ? { prediction_file: predictionFile } : {}),
    });
  }

  score(key: string, tau: number): Promise<ScoreJson> {
    return this.request(`/api/patches/${encodeURIComponent(key)}/score?tau=${tau}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: "{}",
    });
  }
}
