/**
 * Constraint chips: the studio-side representation of the extra penalty
 * terms a user can pin onto elements, plus lossless serialization to the
 * exact JSON POST /optimize accepts.
 */

import type { ConstraintJson, ConstraintKind, ConstraintsJson } from './types';

export const CONSTRAINT_KINDS: ReadonlyArray<ConstraintKind> = [
  'min-size',
  'equal-size',
  'alignment',
  'group-adjacency',
];

export const DEFAULT_PENALTY_CONSTANT = 10000.0;

export class ConstraintError extends Error {}

/** One annotation chip attached to canvas elements. */
export interface ConstraintChip {
  kind: ConstraintKind;
  ids: string[];
  constant: number;
  min_w: number;
  min_h: number;
  gap_max: number;
  axis: 'x' | 'y';
}

export interface ChipOptions {
  constant?: number;
  min_w?: number;
  min_h?: number;
  gap_max?: number;
  axis?: 'x' | 'y';
}

/** Build a chip, enforcing the same arity and range rules as the service. */
export function makeChip(kind: ConstraintKind, ids: string[], opts: ChipOptions = {}): ConstraintChip {
  if (!CONSTRAINT_KINDS.includes(kind)) {
    throw new ConstraintError(`unknown constraint kind '${kind}'`);
  }
  const want = kind === 'min-size' ? 1 : 2;
  if (ids.length !== want) {
    throw new ConstraintError(`${kind} takes ${want} id(s)`);
  }
  const axis = opts.axis ?? 'x';
  if (axis !== 'x' && axis !== 'y') {
    throw new ConstraintError("axis must be 'x' or 'y'");
  }
  const constant = opts.constant ?? DEFAULT_PENALTY_CONSTANT;
  if (constant < 0) {
    throw new ConstraintError('constraint constant must be >= 0');
  }
  return {
    kind,
    ids: [...ids],
    constant,
    min_w: opts.min_w ?? 0.0,
    min_h: opts.min_h ?? 0.0,
    gap_max: opts.gap_max ?? 0.02,
    axis,
  };
}

/** Chip to the wire form, dropping fields still at their default. */
export function chipToJson(chip: ConstraintChip): ConstraintJson {
  const out: ConstraintJson = { kind: chip.kind, ids: [...chip.ids] };
  if (chip.constant !== DEFAULT_PENALTY_CONSTANT) {
    out.constant = chip.constant;
  }
  if (chip.kind === 'min-size') {
    out.min_w = chip.min_w;
    out.min_h = chip.min_h;
  }
  if (chip.kind === 'group-adjacency' && chip.gap_max !== 0.02) {
    out.gap_max = chip.gap_max;
  }
  if (chip.kind === 'alignment') {
    out.axis = chip.axis;
  }
  return out;
}

/** Wire form back to a chip; inverse of chipToJson for valid payloads. */
export function chipFromJson(data: ConstraintJson): ConstraintChip {
  return makeChip(data.kind, data.ids, {
    constant: data.constant,
    min_w: data.min_w,
    min_h: data.min_h,
    gap_max: data.gap_max,
    axis: data.axis,
  });
}

/** Assemble the "constraints" request field from the current chips. */
export function serializeConstraints(
  chips: ConstraintChip[],
  overlapConstant?: number,
  boundaryConstant?: number,
): ConstraintsJson {
  const out: ConstraintsJson = {};
  if (overlapConstant !== undefined) {
    out.overlap_constant = overlapConstant;
  }
  if (boundaryConstant !== undefined) {
    out.boundary_constant = boundaryConstant;
  }
  if (chips.length > 0) {
    out.constraints = chips.map(chipToJson);
  }
  return out;
}
