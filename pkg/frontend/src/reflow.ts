/**
 * Client-side group reflow, numerically identical to the backend.
 *
 * When the user resizes or drags a container the studio recomputes member
 * rects locally so the canvas stays live, but the math must land on the
 * same doubles the service produces or the preview would disagree with the
 * exported CSS. Every constant and branch below mirrors the backend.
 */

import type { Rect, ScreenSpec } from './types';

export const REFLOW_MIN_GAP = 0.01;
export const MIN_MEMBER_EXTENT = 1e-3;

export class DegenerateContainerError extends Error {}

export interface ReflowMember {
  id: string;
  aspect_ratio?: number | null;
}

interface GridCandidate {
  score: number;
  rows: number;
  cols: number;
  dims: Array<[number, number]>;
}

function normWidthPerHeight(aspectRatio: number, screen: ScreenSpec): number {
  return (aspectRatio * screen.height_px) / screen.width_px;
}

function* gridCandidates(
  n: number,
  W: number,
  H: number,
  aspects: Array<number | null | undefined>,
  screen: ScreenSpec,
): Generator<GridCandidate> {
  for (let rows = 1; rows <= n; rows++) {
    const cols = Math.ceil(n / rows);
    const wAvail = (W - (cols - 1) * REFLOW_MIN_GAP) / cols;
    const hAvail = (H - (rows - 1) * REFLOW_MIN_GAP) / rows;
    if (wAvail <= 0 || hAvail <= 0) {
      continue;
    }
    const dims: Array<[number, number]> = [];
    for (const a of aspects) {
      if (a === null || a === undefined) {
        dims.push([wAvail, hAvail]);
      } else {
        const k = normWidthPerHeight(a, screen);
        const h = Math.min(hAvail, wAvail / k);
        dims.push([k * h, h]);
      }
    }
    let score = Infinity;
    for (const [w, h] of dims) {
      score = Math.min(score, Math.min(w, h));
    }
    yield { score, rows, cols, dims };
  }
}

/**
 * Lay members out row-major inside the container rect.
 *
 * Row count maximizes the smallest member extent subject to the minimum
 * gap; leftover space becomes uniform gaps flush with the container edges,
 * and a lone row or column is centered. Returns a map from member id to
 * center rect. Throws DegenerateContainerError when no grid can hold the
 * members at the minimum extent.
 */
export function reflowGroup(
  containerRect: Rect,
  members: ReflowMember[],
  screen: ScreenSpec,
): Map<string, Rect> {
  if (members.length === 0) {
    throw new DegenerateContainerError('container has no members');
  }
  const n = members.length;
  const W = containerRect.w;
  const H = containerRect.h;
  const aspects = members.map((m) => m.aspect_ratio);

  let best: GridCandidate | null = null;
  for (const cand of gridCandidates(n, W, H, aspects, screen)) {
    if (best === null || cand.score > best.score + 1e-15) {
      best = cand;
    }
  }
  if (best === null || best.score < MIN_MEMBER_EXTENT) {
    throw new DegenerateContainerError(`container too small for ${n} member(s)`);
  }
  const { rows, cols, dims } = best;

  let slotW = -Infinity;
  let slotH = -Infinity;
  for (const [w, h] of dims) {
    slotW = Math.max(slotW, w);
    slotH = Math.max(slotH, h);
  }
  let gapX: number;
  let x0: number;
  if (cols > 1) {
    gapX = (W - cols * slotW) / (cols - 1);
    x0 = containerRect.cx - W / 2 + slotW / 2;
  } else {
    gapX = 0.0;
    x0 = containerRect.cx;
  }
  let gapY: number;
  let y0: number;
  if (rows > 1) {
    gapY = (H - rows * slotH) / (rows - 1);
    y0 = containerRect.cy - H / 2 + slotH / 2;
  } else {
    gapY = 0.0;
    y0 = containerRect.cy;
  }

  const out = new Map<string, Rect>();
  members.forEach((m, idx) => {
    const r = Math.floor(idx / cols);
    const c = idx % cols;
    const [w, h] = dims[idx];
    out.set(m.id, {
      cx: x0 + c * (slotW + gapX),
      cy: y0 + r * (slotH + gapY),
      w,
      h,
    });
  });
  return out;
}
