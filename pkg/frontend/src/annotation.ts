import type { ProfileDoc, RoiDoc, TaskDoc, TaskKind } from './types.js';

export interface Rect {
  x: number;
  y: number;
  width: number;
  height: number;
}

export interface RoiDraft {
  id: string;
  view: string;
  rect: Rect;
  taskKind: TaskKind;
  taskId: string;
  params: Record<string, unknown>;
  /** True when the last edit had to be clamped back inside the image. */
  clamped: boolean;
}

export interface ViewGeometry {
  width: number;
  height: number;
}

/** Clamp a rectangle into [0, width] x [0, height], preserving size when the
 * box fits and shrinking it when it does not. Coordinates stay integers so
 * saved ROIs round-trip pixel-exact. */
export function clampRect(rect: Rect, bounds: ViewGeometry): { rect: Rect; clamped: boolean } {
  const width = Math.max(1, Math.min(Math.round(rect.width), bounds.width));
  const height = Math.max(1, Math.min(Math.round(rect.height), bounds.height));
  const x = Math.min(Math.max(Math.round(rect.x), 0), bounds.width - width);
  const y = Math.min(Math.max(Math.round(rect.y), 0), bounds.height - height);
  const out = { x, y, width, height };
  const clamped =
    out.x !== rect.x || out.y !== rect.y || out.width !== rect.width || out.height !== rect.height;
  return { rect: out, clamped };
}

/** In-progress profile annotation: golden geometry per view, ROI drafts with
 * task-kind assignment, and a dirty flag tracking unsaved edits. */
export class AnnotationSession {
  readonly profileId: string;
  productName: string;
  private readonly geometry = new Map<string, ViewGeometry>();
  private readonly goldenPaths = new Map<string, string>();
  private rois: RoiDraft[] = [];
  private baseVersion = 1;
  private dirtyFlag = false;

  constructor(profileId: string, productName: string) {
    this.profileId = profileId;
    this.productName = productName;
  }

  get dirty(): boolean {
    return this.dirtyFlag;
  }

  get views(): string[] {
    return [...this.geometry.keys()];
  }

  get roiDrafts(): readonly RoiDraft[] {
    return this.rois;
  }

  addView(view: string, geometry: ViewGeometry, goldenPath: string): void {
    this.geometry.set(view, geometry);
    this.goldenPaths.set(view, goldenPath);
    this.dirtyFlag = true;
  }

  /** Draw or move an ROI; out-of-bounds coordinates are clamped and flagged. */
  placeRoi(draft: Omit<RoiDraft, 'clamped'>): RoiDraft {
    const bounds = this.geometry.get(draft.view);
    if (!bounds) throw new Error(`unknown view ${draft.view}`);
    const { rect, clamped } = clampRect(draft.rect, bounds);
    const placed: RoiDraft = { ...draft, rect, clamped };
    const index = this.rois.findIndex((r) => r.id === draft.id);
    if (index >= 0) this.rois[index] = placed;
    else this.rois.push(placed);
    this.dirtyFlag = true;
    return placed;
  }

  removeRoi(id: string): void {
    this.rois = this.rois.filter((r) => r.id !== id);
    this.dirtyFlag = true;
  }

  /** Serialize the draft to the profile document the gateway stores. */
  toProfileDoc(): ProfileDoc {
    return {
      id: this.profileId,
      product_name: this.productName,
      version: this.baseVersion,
      views: this.views,
      golden_images: Object.fromEntries(this.goldenPaths),
      tasks: this.rois.map((r): TaskDoc => ({
        id: r.taskId,
        kind: r.taskKind,
        roi: {
          id: r.id,
          view: r.view,
          rect: [r.rect.x, r.rect.y, r.rect.width, r.rect.height],
          task_ref: r.taskId,
        } satisfies RoiDoc,
        params: r.params,
        model_ref: null,
      })),
    };
  }

  /** Reload server state (e.g. after save or page reload); clears the flag. */
  loadProfileDoc(doc: ProfileDoc, geometry: Record<string, ViewGeometry>): void {
    this.productName = doc.product_name;
    this.baseVersion = doc.version;
    this.geometry.clear();
    this.goldenPaths.clear();
    for (const view of doc.views) {
      const g = geometry[view];
      if (!g) throw new Error(`no geometry for view ${view}`);
      this.geometry.set(view, g);
      this.goldenPaths.set(view, doc.golden_images[view] ?? '');
    }
    this.rois = doc.tasks.map((t) => ({
      id: t.roi.id,
      view: t.roi.view,
      rect: { x: t.roi.rect[0], y: t.roi.rect[1], width: t.roi.rect[2], height: t.roi.rect[3] },
      taskKind: t.kind,
      taskId: t.id,
      params: t.params,
      clamped: false,
    }));
    this.dirtyFlag = false;
  }

  markSaved(): void {
    this.dirtyFlag = false;
  }
}
