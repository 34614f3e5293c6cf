/** JSON document shapes exchanged with the /api/v1 gateway. */

export type TaskKind =
  | 'template_presence'
  | 'mask_intersection_seating'
  | 'keypoint_direction'
  | 'multi_class_latch'
  | 'exposed_area';

export type VerdictValue = 'PASS' | 'FAIL' | 'INDETERMINATE';

export interface RoiDoc {
  id: string;
  view: string;
  /** [x, y, width, height] in golden-image pixels. */
  rect: [number, number, number, number];
  task_ref: string;
}

export interface TaskDoc {
  id: string;
  kind: TaskKind;
  roi: RoiDoc;
  params: Record<string, unknown>;
  model_ref: string | null;
}

export interface ProfileDoc {
  id: string;
  product_name: string;
  version: number;
  views: string[];
  golden_images: Record<string, string>;
  tasks: TaskDoc[];
}

export interface TransformReportDoc {
  view: string;
  ok: boolean;
  matrix: number[][] | null;
  inlier_count: number;
  mean_error_px: number;
  reason: string | null;
}

export interface TaskVerdictDoc {
  task_id: string;
  verdict: VerdictValue;
  score: number;
  artifact_paths: Record<string, string>;
  reason: string | null;
  evidence: Record<string, unknown>;
}

export interface InspectionResultDoc {
  result_id: string;
  unit_id: string;
  profile_id: string;
  profile_version: number;
  timestamp: string;
  transforms: TransformReportDoc[];
  verdicts: TaskVerdictDoc[];
  overall: VerdictValue;
}

export interface AnalyticsRecordDoc {
  result_id: string;
  unit_id: string;
  profile_id: string;
  profile_version: number;
  timestamp: string;
  overall: VerdictValue;
  tasks: { task_id: string; verdict: VerdictValue; score: number }[];
  root: string;
}

export interface ResultPageDoc {
  records: AnalyticsRecordDoc[];
  next_cursor: string | null;
}

export interface ModelVersionDoc {
  task_id: string;
  version: number;
  status: 'STAGING' | 'PRODUCTION' | 'ARCHIVED';
  metrics: Record<string, number>;
  location: string;
  created_at: string;
  comments: string;
}

export interface TrainingJobDoc {
  job_id: string;
  state: 'QUEUED' | 'RUNNING' | 'SUCCEEDED' | 'FAILED' | 'DEAD';
  task_id?: string;
  dataset_prefix?: string;
  attempts?: number;
  error?: string | null;
  model_version?: number | null;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  correlation_id: string;
}
