import { describe, expect, it } from 'vitest';

import { AnnotationSession, clampRect } from '../src/annotation.js';
import type { ProfileDoc } from '../src/types.js';

const GEOMETRY = { width: 160, height: 120 };

function session(): AnnotationSession {
  const s = new AnnotationSession('p1', 'widget');
  s.addView('top', GEOMETRY, 'profiles/p1/golden/top.png');
  return s;
}

describe('clampRect', () => {
  it('keeps an in-bounds rect untouched', () => {
    const { rect, clamped } = clampRect({ x: 10, y: 20, width: 30, height: 40 }, GEOMETRY);
    expect(rect).toEqual({ x: 10, y: 20, width: 30, height: 40 });
    expect(clamped).toBe(false);
  });

  it('pulls a rect dragged past the edge back inside', () => {
    const { rect, clamped } = clampRect({ x: 150, y: -5, width: 30, height: 40 }, GEOMETRY);
    expect(clamped).toBe(true);
    expect(rect).toEqual({ x: 130, y: 0, width: 30, height: 40 });
  });

  it('shrinks a rect larger than the image', () => {
    const { rect } = clampRect({ x: 0, y: 0, width: 500, height: 500 }, GEOMETRY);
    expect(rect).toEqual({ x: 0, y: 0, width: 160, height: 120 });
  });

  it('rounds to integer pixels', () => {
    const { rect } = clampRect({ x: 1.4, y: 2.6, width: 10.2, height: 9.9 }, GEOMETRY);
    expect(rect).toEqual({ x: 1, y: 3, width: 10, height: 10 });
  });
});

describe('AnnotationSession', () => {
  it('tracks the dirty flag across edit, save, reload', () => {
    const s = session();
    expect(s.dirty).toBe(true); // addView is an unsaved edit
    s.markSaved();
    expect(s.dirty).toBe(false);
    s.placeRoi({
      id: 'r1',
      view: 'top',
      rect: { x: 5, y: 5, width: 20, height: 20 },
      taskKind: 'mask_intersection_seating',
      taskId: 't1',
      params: { upper_class: 'upper', lower_class: 'lower', intersection_threshold: 5.7 },
    });
    expect(s.dirty).toBe(true);
  });

  it('round-trips ROI coordinates pixel-exact through the profile document', () => {
    const s = session();
    s.placeRoi({
      id: 'r1',
      view: 'top',
      rect: { x: 37, y: 41, width: 23, height: 19 },
      taskKind: 'template_presence',
      taskId: 'tpl',
      params: { k: 3 },
    });
    const doc = s.toProfileDoc();
    expect(doc.tasks[0]!.roi.rect).toEqual([37, 41, 23, 19]);

    const restored = new AnnotationSession('p1', 'widget');
    restored.loadProfileDoc(doc, { top: GEOMETRY });
    expect(restored.dirty).toBe(false);
    expect(restored.toProfileDoc()).toEqual(doc);
  });

  it('flags and clamps a rect placed outside the image', () => {
    const s = session();
    const placed = s.placeRoi({
      id: 'r1',
      view: 'top',
      rect: { x: -10, y: 200, width: 30, height: 30 },
      taskKind: 'exposed_area',
      taskId: 'x',
      params: { exposed_class: 'copper' },
    });
    expect(placed.clamped).toBe(true);
    expect(placed.rect).toEqual({ x: 0, y: 90, width: 30, height: 30 });
  });

  it('rejects a draft for an unknown view', () => {
    const s = session();
    expect(() =>
      s.placeRoi({
        id: 'r1',
        view: 'bottom',
        rect: { x: 0, y: 0, width: 5, height: 5 },
        taskKind: 'exposed_area',
        taskId: 'x',
        params: {},
      }),
    ).toThrow(/unknown view/);
  });

  it('replaces a draft with the same id instead of duplicating it', () => {
    const s = session();
    const base = {
      id: 'r1',
      view: 'top',
      taskKind: 'exposed_area' as const,
      taskId: 'x',
      params: {},
    };
    s.placeRoi({ ...base, rect: { x: 1, y: 1, width: 5, height: 5 } });
    s.placeRoi({ ...base, rect: { x: 9, y: 9, width: 5, height: 5 } });
    expect(s.roiDrafts).toHaveLength(1);
    expect(s.roiDrafts[0]!.rect.x).toBe(9);
  });

  it('reload reconstructs the session purely from server state', () => {
    const doc: ProfileDoc = {
      id: 'p2',
      product_name: 'other',
      version: 3,
      views: ['top'],
      golden_images: { top: 'profiles/p2/golden/top.png' },
      tasks: [
        {
          id: 'seat',
          kind: 'mask_intersection_seating',
          roi: { id: 'roi-seat', view: 'top', rect: [90, 90, 40, 40], task_ref: 'seat' },
          params: { upper_class: 'upper', lower_class: 'lower' },
          model_ref: null,
        },
      ],
    };
    const s = new AnnotationSession('p2', '');
    s.loadProfileDoc(doc, { top: GEOMETRY });
    expect(s.productName).toBe('other');
    expect(s.toProfileDoc()).toEqual(doc);
  });
});
