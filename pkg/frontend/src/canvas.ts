/**
 * Editable canvas mirror of a layout.
 *
 * Holds a deep-cloned copy of the layout JSON plus selection, undo history
 * and constraint chips. Edits mutate only the local mirror; nothing reaches
 * the service until the caller submits the serialized layout. While the
 * mirror is bound to a running job all edits are refused.
 */

import { ConstraintChip, serializeConstraints } from './constraints';
import { rectToPixels } from './geometry';
import { aspectHeight } from './geometry';
import { reflowGroup } from './reflow';
import type {
  ConstraintsJson,
  ContainerJson,
  ElementJson,
  LayoutJson,
  PixelRect,
  Rect,
} from './types';

export class CanvasEditError extends Error {}

export class CanvasLockedError extends CanvasEditError {
  constructor(jobId: string) {
    super(`canvas is bound to running job ${jobId}; edits are disabled`);
  }
}

export interface ElementView {
  id: string;
  kind: string;
  rect: Rect;
  pixels: PixelRect;
  selected: boolean;
  isContainer: boolean;
}

function clone<T>(value: T): T {
  return JSON.parse(JSON.stringify(value)) as T;
}

function entityRect(e: { cx: number; cy: number; w: number; h: number }): Rect {
  return { cx: e.cx, cy: e.cy, w: e.w, h: e.h };
}

export class CanvasState {
  private layout: LayoutJson;
  private undoStack: LayoutJson[] = [];
  private chips: ConstraintChip[] = [];
  private selectedId: string | null = null;
  private boundJobId: string | null = null;

  constructor(layout: LayoutJson) {
    this.layout = clone(layout);
    this.layout.containers = this.layout.containers ?? [];
  }

  // ---- access -----------------------------------------------------------

  /** Deep copy in the exact wire schema; safe to POST as-is. */
  toLayoutJson(): LayoutJson {
    return clone(this.layout);
  }

  /** Swap in a new layout (for example an adopted job step); undoable. */
  replaceLayout(layout: LayoutJson): void {
    this.assertEditable();
    this.pushUndo();
    this.layout = clone(layout);
    this.layout.containers = this.layout.containers ?? [];
    this.selectedId = null;
  }

  get selection(): string | null {
    return this.selectedId;
  }

  get constraintChips(): ReadonlyArray<ConstraintChip> {
    return this.chips;
  }

  get boundJob(): string | null {
    return this.boundJobId;
  }

  private element(id: string): ElementJson | undefined {
    return this.layout.elements.find((e) => e.id === id);
  }

  private container(id: string): ContainerJson | undefined {
    return this.layout.containers.find((c) => c.id === id);
  }

  private requireEntity(id: string): ElementJson | ContainerJson {
    const ent = this.element(id) ?? this.container(id);
    if (!ent) {
      throw new CanvasEditError(`no element or container '${id}'`);
    }
    return ent;
  }

  // ---- selection --------------------------------------------------------

  select(id: string): void {
    this.requireEntity(id);
    this.selectedId = id;
  }

  clearSelection(): void {
    this.selectedId = null;
  }

  // ---- job binding ------------------------------------------------------

  bindToJob(jobId: string): void {
    this.boundJobId = jobId;
  }

  releaseJob(): void {
    this.boundJobId = null;
  }

  private assertEditable(): void {
    if (this.boundJobId !== null) {
      throw new CanvasLockedError(this.boundJobId);
    }
  }

  // ---- constraint chips -------------------------------------------------

  addConstraint(chip: ConstraintChip): void {
    this.assertEditable();
    for (const id of chip.ids) {
      this.requireEntity(id);
    }
    this.chips.push(chip);
  }

  removeConstraint(index: number): void {
    this.assertEditable();
    if (index < 0 || index >= this.chips.length) {
      throw new CanvasEditError(`no constraint chip at index ${index}`);
    }
    this.chips.splice(index, 1);
  }

  serializedConstraints(overlapConstant?: number, boundaryConstant?: number): ConstraintsJson {
    return serializeConstraints(this.chips, overlapConstant, boundaryConstant);
  }

  // ---- edits ------------------------------------------------------------

  private pushUndo(): void {
    this.undoStack.push(clone(this.layout));
  }

  /** Revert the most recent geometry edit. Returns false when empty. */
  undo(): boolean {
    this.assertEditable();
    const prev = this.undoStack.pop();
    if (!prev) {
      return false;
    }
    this.layout = prev;
    return true;
  }

  private memberIds(): Set<string> {
    const out = new Set<string>();
    for (const c of this.layout.containers) {
      for (const id of c.member_ids) {
        out.add(id);
      }
    }
    return out;
  }

  private reflowContainer(c: ContainerJson): void {
    const members = c.member_ids.map((mid) => {
      const m = this.element(mid);
      if (!m) {
        throw new CanvasEditError(`container ${c.id} lists missing member ${mid}`);
      }
      return m;
    });
    const rects = reflowGroup(entityRect(c), members, this.layout.screen);
    for (const m of members) {
      const r = rects.get(m.id)!;
      m.cx = r.cx;
      m.cy = r.cy;
      m.w = r.w;
      m.h = r.h;
    }
  }

  private hostedDropTargets(hostId: string): ElementJson[] {
    const staticIds = new Set(
      this.layout.elements.filter((e) => e.kind === 'static-div').map((e) => e.id),
    );
    return this.layout.elements.filter(
      (e) =>
        e.kind === 'drop-target' &&
        e.container_id === hostId &&
        staticIds.has(hostId),
    );
  }

  /** Translate an entity; members and hosted drops ride along rigidly. */
  dragBy(id: string, dx: number, dy: number): void {
    this.assertEditable();
    const ent = this.requireEntity(id);
    if (this.memberIds().has(id)) {
      throw new CanvasEditError(`'${id}' is a group member; drag its container`);
    }
    this.pushUndo();
    ent.cx += dx;
    ent.cy += dy;
    const followers: ElementJson[] = [];
    const asContainer = this.container(id);
    if (asContainer) {
      for (const mid of asContainer.member_ids) {
        const m = this.element(mid);
        if (m) {
          followers.push(m);
        }
      }
    } else if ((ent as ElementJson).kind === 'static-div') {
      followers.push(...this.hostedDropTargets(id));
    }
    for (const f of followers) {
      f.cx += dx;
      f.cy += dy;
    }
  }

  /**
   * Set an entity's extents. Elements with a fixed aspect keep it: the
   * height argument is ignored and recomputed from the width. Containers
   * reflow their members; an impossible fit reverts the resize.
   */
  resizeTo(id: string, w: number, h: number): void {
    this.assertEditable();
    const ent = this.requireEntity(id);
    if (this.memberIds().has(id)) {
      throw new CanvasEditError(`'${id}' is a group member; resize its container`);
    }
    if (w <= 0 || h <= 0) {
      throw new CanvasEditError('extents must be positive');
    }
    this.pushUndo();
    const asContainer = this.container(id);
    if (asContainer) {
      const oldW = asContainer.w;
      const oldH = asContainer.h;
      asContainer.w = w;
      asContainer.h = h;
      try {
        this.reflowContainer(asContainer);
      } catch (err) {
        asContainer.w = oldW;
        asContainer.h = oldH;
        this.undoStack.pop();
        throw err;
      }
      return;
    }
    const el = ent as ElementJson;
    el.w = w;
    if (el.aspect_ratio !== undefined && el.aspect_ratio !== null) {
      el.h = aspectHeight(w, el.aspect_ratio, this.layout.screen);
    } else {
      el.h = h;
    }
  }

  /** Exchange the centers of two entities, follower rects riding along. */
  swapTwo(idA: string, idB: string): void {
    this.assertEditable();
    const a = this.requireEntity(idA);
    const b = this.requireEntity(idB);
    if (idA === idB) {
      throw new CanvasEditError('swap needs two distinct ids');
    }
    const members = this.memberIds();
    if (members.has(idA) || members.has(idB)) {
      throw new CanvasEditError('group members cannot be swapped directly');
    }
    this.pushUndo();
    const ax = a.cx;
    const ay = a.cy;
    this.moveCenter(idA, b.cx, b.cy);
    this.moveCenter(idB, ax, ay);
  }

  private moveCenter(id: string, cx: number, cy: number): void {
    const ent = this.requireEntity(id);
    const dx = cx - ent.cx;
    const dy = cy - ent.cy;
    ent.cx = cx;
    ent.cy = cy;
    const asContainer = this.container(id);
    let followers: ElementJson[] = [];
    if (asContainer) {
      followers = asContainer.member_ids
        .map((mid) => this.element(mid))
        .filter((m): m is ElementJson => m !== undefined);
    } else if ((ent as ElementJson).kind === 'static-div') {
      followers = this.hostedDropTargets(id);
    }
    for (const f of followers) {
      f.cx += dx;
      f.cy += dy;
    }
  }

  // ---- rendering --------------------------------------------------------

  /**
   * Draw list in paint order: containers first as outlines, then elements
   * top-down / left-right. Pixel rects use the same rounding as the CSS
   * the service exports.
   */
  renderViews(): ElementView[] {
    const screen = this.layout.screen;
    const views: ElementView[] = [];
    for (const c of this.layout.containers) {
      views.push({
        id: c.id,
        kind: c.kind,
        rect: entityRect(c),
        pixels: rectToPixels(entityRect(c), screen),
        selected: c.id === this.selectedId,
        isContainer: true,
      });
    }
    const els = [...this.layout.elements].sort((p, q) => {
      const pt = p.cy - p.h / 2;
      const qt = q.cy - q.h / 2;
      if (pt !== qt) {
        return pt - qt;
      }
      const pl = p.cx - p.w / 2;
      const ql = q.cx - q.w / 2;
      if (pl !== ql) {
        return pl - ql;
      }
      return p.id < q.id ? -1 : p.id > q.id ? 1 : 0;
    });
    for (const e of els) {
      views.push({
        id: e.id,
        kind: e.kind,
        rect: entityRect(e),
        pixels: rectToPixels(entityRect(e), screen),
        selected: e.id === this.selectedId,
        isContainer: false,
      });
    }
    return views;
  }
}
