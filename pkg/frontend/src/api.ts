/**
 * Thin typed client for the layoutforge HTTP service.
 *
 * Every number the studio displays comes through here; the client does no
 * prediction math of its own. The fetch implementation is injectable so
 * tests can run against a scripted transport.
 */

import type {
  ConstraintsJson,
  JobStatus,
  LayoutJson,
  OptimizeSubmitResponse,
  PredictResponse,
  SequenceJson,
} from './types';

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

export interface OptimizeRequest {
  layout: LayoutJson;
  sequence: SequenceJson;
  constraints?: ConstraintsJson;
  steps?: number;
}

export class StudioApi {
  constructor(
    private readonly baseUrl: string = '',
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async readError(resp: Response): Promise<never> {
    let detail = resp.statusText;
    try {
      const body = (await resp.json()) as { detail?: string };
      if (typeof body.detail === 'string') {
        detail = body.detail;
      }
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(resp.status, detail);
  }

  private async getJson<T>(path: string): Promise<T> {
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`);
    if (!resp.ok) {
      await this.readError(resp);
    }
    return (await resp.json()) as T;
  }

  private async postJson<T>(path: string, body: unknown): Promise<T> {
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(body),
    });
    if (!resp.ok) {
      await this.readError(resp);
    }
    return (await resp.json()) as T;
  }

  predict(layout: LayoutJson, sequence: SequenceJson): Promise<PredictResponse> {
    return this.postJson<PredictResponse>('/predict', { layout, sequence });
  }

  submitOptimize(request: OptimizeRequest): Promise<OptimizeSubmitResponse> {
    const body: Record<string, unknown> = {
      layout: request.layout,
      sequence: request.sequence,
    };
    if (request.constraints !== undefined) {
      body.constraints = request.constraints;
    }
    if (request.steps !== undefined) {
      body.steps = request.steps;
    }
    return this.postJson<OptimizeSubmitResponse>('/optimize', body);
  }

  jobStatus(jobId: string): Promise<JobStatus> {
    return this.getJson<JobStatus>(`/jobs/${jobId}`);
  }

  async stepCss(jobId: string, index: number): Promise<string> {
    const resp = await this.fetchImpl(`${this.baseUrl}/jobs/${jobId}/steps/${index}/css`);
    if (!resp.ok) {
      await this.readError(resp);
    }
    return resp.text();
  }

  stepLayout(jobId: string, index: number): Promise<LayoutJson> {
    return this.getJson<LayoutJson>(`/jobs/${jobId}/steps/${index}/layout`);
  }

  bestLayout(jobId: string): Promise<LayoutJson> {
    return this.getJson<LayoutJson>(`/jobs/${jobId}/best`);
  }
}
