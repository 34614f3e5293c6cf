import type { VerdictValue } from './types.js';

/** Mirrors the GET /inspections query filters; serializable to a query
 * string so a review URL fully reconstructs the view. */
export interface ReviewFilter {
  since?: string;
  until?: string;
  profileId?: string;
  verdict?: VerdictValue;
  taskId?: string;
  unitId?: string;
  cursor?: string;
  limit?: number;
}

const QUERY_NAMES: [keyof ReviewFilter, string][] = [
  ['since', 'since'],
  ['until', 'until'],
  ['profileId', 'profile_id'],
  ['verdict', 'verdict'],
  ['taskId', 'task_id'],
  ['unitId', 'unit_id'],
  ['cursor', 'cursor'],
  ['limit', 'limit'],
];

export function filterToQuery(filter: ReviewFilter): string {
  const params = new URLSearchParams();
  for (const [field, name] of QUERY_NAMES) {
    const value = filter[field];
    if (value !== undefined && value !== '') params.set(name, String(value));
  }
  return params.toString();
}

export function filterFromQuery(query: string): ReviewFilter {
  const params = new URLSearchParams(query);
  const filter: ReviewFilter = {};
  for (const [field, name] of QUERY_NAMES) {
    const value = params.get(name);
    if (value === null) continue;
    if (field === 'limit') filter.limit = Number(value);
    else if (field === 'verdict') filter.verdict = value as VerdictValue;
    else filter[field] = value;
  }
  return filter;
}
