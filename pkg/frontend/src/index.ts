export * from './types.js';
export { ApiClient, ApiError } from './client.js';
export type { ClientOptions, FetchLike } from './client.js';
export { AnnotationSession, clampRect } from './annotation.js';
export type { Rect, RoiDraft, ViewGeometry } from './annotation.js';
export { filterFromQuery, filterToQuery } from './review.js';
export type { ReviewFilter } from './review.js';
export { promoteAndRefresh, registryRows, trainingRows } from './dashboard.js';
export type { PromoteOutcome, RegistryRow, TrainingRow } from './dashboard.js';
