import { ApiClient, ApiError } from './client.js';
import type { ModelVersionDoc, TrainingJobDoc } from './types.js';

export interface TrainingRow {
  jobId: string;
  state: TrainingJobDoc['state'];
  taskId: string;
  attempts: number;
  modelVersion: number | null;
  error: string | null;
}

export function trainingRows(jobs: TrainingJobDoc[]): TrainingRow[] {
  return jobs
    .map((job) => ({
      jobId: job.job_id,
      state: job.state,
      taskId: job.task_id ?? '',
      attempts: job.attempts ?? 0,
      modelVersion: job.model_version ?? null,
      error: job.error ?? null,
    }))
    .sort((a, b) => a.jobId.localeCompare(b.jobId));
}

export interface RegistryRow {
  version: number;
  status: ModelVersionDoc['status'];
  f1: number | null;
  location: string;
  createdAt: string;
  comments: string;
  /** Promotion only makes sense for non-production versions. */
  canPromote: boolean;
}

export function registryRows(versions: ModelVersionDoc[]): RegistryRow[] {
  return [...versions]
    .sort((a, b) => b.version - a.version)
    .map((v) => ({
      version: v.version,
      status: v.status,
      f1: typeof v.metrics['f1'] === 'number' ? v.metrics['f1'] : null,
      location: v.location,
      createdAt: v.created_at,
      comments: v.comments,
      canPromote: v.status !== 'PRODUCTION',
    }));
}

export type PromoteOutcome =
  | { ok: true; rows: RegistryRow[] }
  | { ok: false; message: string };

/** Promote with an accuracy gate and re-read the table; gate failures come
 * back as a displayable message instead of an exception. */
export async function promoteAndRefresh(
  client: ApiClient,
  taskId: string,
  version: number,
  minF1?: number,
): Promise<PromoteOutcome> {
  try {
    await client.promoteModel(
      taskId,
      version,
      'PRODUCTION',
      minF1 === undefined ? { type: 'manual' } : { type: 'accuracy_gate', min_f1: minF1 },
    );
  } catch (error) {
    if (error instanceof ApiError && error.code === 'GATE_FAILED') {
      return { ok: false, message: error.message };
    }
    throw error;
  }
  const { versions } = await client.listModels(taskId);
  return { ok: true, rows: registryRows(versions) };
}
