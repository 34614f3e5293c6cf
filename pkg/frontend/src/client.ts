import type {
  ApiErrorBody,
  InspectionResultDoc,
  ModelVersionDoc,
  ProfileDoc,
  ResultPageDoc,
  TaskDoc,
  TrainingJobDoc,
} from './types.js';

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
    readonly correlationId: string,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface ClientOptions {
  baseUrl: string;
  token?: string;
  /** Injectable for tests; defaults to the global fetch. */
  fetch?: FetchLike;
}

/** Typed client for the /api/v1 gateway; every console view goes through it. */
export class ApiClient {
  private readonly baseUrl: string;
  private readonly token?: string;
  private readonly fetchImpl: FetchLike;

  constructor(options: ClientOptions) {
    this.baseUrl = options.baseUrl.replace(/\/+$/, '');
    this.token = options.token;
    this.fetchImpl = options.fetch ?? ((url, init) => fetch(url, init));
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
    raw?: { data: BodyInit; contentType?: string },
  ): Promise<T> {
    const headers: Record<string, string> = {};
    if (this.token) headers['Authorization'] = `Bearer ${this.token}`;
    let payload: BodyInit | undefined;
    if (raw) {
      payload = raw.data;
      if (raw.contentType) headers['Content-Type'] = raw.contentType;
    } else if (body !== undefined) {
      headers['Content-Type'] = 'application/json';
      payload = JSON.stringify(body);
    }
    const response = await this.fetchImpl(`${this.baseUrl}/api/v1${path}`, {
      method,
      headers,
      body: payload,
    });
    if (!response.ok) {
      let parsed: Partial<ApiErrorBody> = {};
      try {
        parsed = (await response.json()) as ApiErrorBody;
      } catch {
        // non-JSON error body; fall through with placeholders
      }
      throw new ApiError(
        response.status,
        parsed.code ?? 'UNKNOWN',
        parsed.message ?? response.statusText,
        parsed.correlation_id ?? '',
      );
    }
    if (response.status === 204) return undefined as T;
    return (await response.json()) as T;
  }

  // -- health --------------------------------------------------------------

  healthz(): Promise<{ status: string }> {
    return this.request('GET', '/healthz');
  }

  // -- profiles ------------------------------------------------------------

  listProfiles(): Promise<{ profiles: string[] }> {
    return this.request('GET', '/profiles');
  }

  getProfile(id: string): Promise<ProfileDoc> {
    return this.request('GET', `/profiles/${encodeURIComponent(id)}`);
  }

  createProfile(doc: ProfileDoc): Promise<ProfileDoc> {
    return this.request('POST', '/profiles', doc);
  }

  updateProfile(doc: ProfileDoc): Promise<ProfileDoc> {
    return this.request('PUT', `/profiles/${encodeURIComponent(doc.id)}`, doc);
  }

  deleteProfile(id: string): Promise<void> {
    return this.request('DELETE', `/profiles/${encodeURIComponent(id)}`);
  }

  uploadGolden(profileId: string, view: string, png: Blob | Uint8Array): Promise<{ path: string }> {
    const data = png instanceof Uint8Array ? new Blob([png as BlobPart]) : png;
    return this.request(
      'PUT',
      `/profiles/${encodeURIComponent(profileId)}/golden/${encodeURIComponent(view)}`,
      undefined,
      { data, contentType: 'image/png' },
    );
  }

  // -- tasks and templates -------------------------------------------------

  addTask(profileId: string, task: TaskDoc): Promise<ProfileDoc> {
    return this.request('POST', `/profiles/${encodeURIComponent(profileId)}/tasks`, task);
  }

  updateTask(profileId: string, task: TaskDoc): Promise<ProfileDoc> {
    return this.request(
      'PUT',
      `/profiles/${encodeURIComponent(profileId)}/tasks/${encodeURIComponent(task.id)}`,
      task,
    );
  }

  deleteTask(profileId: string, taskId: string): Promise<void> {
    return this.request(
      'DELETE',
      `/profiles/${encodeURIComponent(profileId)}/tasks/${encodeURIComponent(taskId)}`,
    );
  }

  uploadTemplate(
    profileId: string,
    taskId: string,
    label: 'PRESENT' | 'ABSENT',
    png: Blob | Uint8Array,
    filename = 'template.png',
  ): Promise<{ template_id: string; path: string }> {
    const form = new FormData();
    form.set('label', label);
    const blob = png instanceof Uint8Array ? new Blob([png as BlobPart], { type: 'image/png' }) : png;
    form.set('file', blob, filename);
    return this.request(
      'POST',
      `/profiles/${encodeURIComponent(profileId)}/tasks/${encodeURIComponent(taskId)}/templates`,
      undefined,
      { data: form },
    );
  }

  // -- ingestion and review ------------------------------------------------

  uploadFrame(
    unitId: string,
    profileId: string,
    view: string,
    png: Blob | Uint8Array,
  ): Promise<{ result_id?: string; status?: string; received_views?: string[] }> {
    const form = new FormData();
    form.set('unit_id', unitId);
    form.set('profile_id', profileId);
    form.set('view', view);
    const blob = png instanceof Uint8Array ? new Blob([png as BlobPart], { type: 'image/png' }) : png;
    form.set('file', blob, `${view}.png`);
    return this.request('POST', '/images', undefined, { data: form });
  }

  getInspection(resultId: string): Promise<InspectionResultDoc> {
    return this.request('GET', `/inspections/${encodeURIComponent(resultId)}`);
  }

  listInspections(query: string): Promise<ResultPageDoc> {
    return this.request('GET', `/inspections${query ? `?${query}` : ''}`);
  }

  submitFeedback(
    resultId: string,
    taskId: string,
    label: 'GOOD' | 'BAD',
  ): Promise<{ stored_path: string; training_job_id: string | null }> {
    return this.request('POST', '/feedback', {
      result_id: resultId,
      task_id: taskId,
      operator_label: label,
    });
  }

  // -- registry and training -----------------------------------------------

  listModels(taskId: string): Promise<{ versions: ModelVersionDoc[] }> {
    return this.request('GET', `/models/${encodeURIComponent(taskId)}`);
  }

  promoteModel(
    taskId: string,
    version: number,
    target: 'STAGING' | 'PRODUCTION',
    policy: { type: 'manual' } | { type: 'accuracy_gate'; min_f1: number } = { type: 'manual' },
  ): Promise<ModelVersionDoc> {
    return this.request(
      'POST',
      `/models/${encodeURIComponent(taskId)}/${version}/promote`,
      { target, policy },
    );
  }

  submitTrainingJob(request: {
    task_id: string;
    dataset_prefix: string;
    hyperparameters?: Record<string, unknown>;
    idempotency_key?: string;
  }): Promise<{ job_id: string }> {
    return this.request('POST', '/training/jobs', request);
  }

  getTrainingJob(jobId: string): Promise<TrainingJobDoc> {
    return this.request('GET', `/training/jobs/${encodeURIComponent(jobId)}`);
  }
}
