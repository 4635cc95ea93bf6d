import { describe, expect, it } from 'vitest';

import {
  ConstraintError,
  DEFAULT_PENALTY_CONSTANT,
  chipFromJson,
  chipToJson,
  makeChip,
  serializeConstraints,
} from '../src/constraints';

describe('makeChip validation', () => {
  it('enforces the id arity per kind', () => {
    expect(() => makeChip('min-size', ['a', 'b'])).toThrow(ConstraintError);
    expect(() => makeChip('equal-size', ['a'])).toThrow(ConstraintError);
    expect(() => makeChip('alignment', ['a', 'b', 'c'])).toThrow(ConstraintError);
    expect(makeChip('min-size', ['a']).ids).toEqual(['a']);
    expect(makeChip('group-adjacency', ['a', 'b']).ids).toEqual(['a', 'b']);
  });

  it('rejects bad axis and negative constants', () => {
    expect(() => makeChip('alignment', ['a', 'b'], { axis: 'z' as never })).toThrow(
      ConstraintError,
    );
    expect(() => makeChip('min-size', ['a'], { constant: -1 })).toThrow(ConstraintError);
  });

  it('fills service defaults', () => {
    const chip = makeChip('equal-size', ['a', 'b']);
    expect(chip.constant).toBe(DEFAULT_PENALTY_CONSTANT);
    expect(chip.gap_max).toBe(0.02);
    expect(chip.axis).toBe('x');
  });
});

describe('serialization to the service schema', () => {
  it('emits min-size with its extents', () => {
    const chip = makeChip('min-size', ['hero'], { min_w: 0.2, min_h: 0.1 });
    expect(chipToJson(chip)).toEqual({
      kind: 'min-size',
      ids: ['hero'],
      min_w: 0.2,
      min_h: 0.1,
    });
  });

  it('emits alignment with its axis and keeps overrides', () => {
    const chip = makeChip('alignment', ['a', 'b'], { axis: 'y', constant: 500 });
    expect(chipToJson(chip)).toEqual({
      kind: 'alignment',
      ids: ['a', 'b'],
      axis: 'y',
      constant: 500,
    });
  });

  it('omits fields still at their defaults', () => {
    const chip = makeChip('group-adjacency', ['a', 'b']);
    expect(chipToJson(chip)).toEqual({ kind: 'group-adjacency', ids: ['a', 'b'] });
  });

  it('round-trips through JSON without loss', () => {
    const chips = [
      makeChip('min-size', ['hero'], { min_w: 0.25, min_h: 0.15 }),
      makeChip('alignment', ['a', 'b'], { axis: 'y' }),
      makeChip('equal-size', ['a', 'b'], { constant: 2500 }),
      makeChip('group-adjacency', ['c', 'd'], { gap_max: 0.05 }),
    ];
    for (const chip of chips) {
      const wire = JSON.parse(JSON.stringify(chipToJson(chip)));
      expect(chipFromJson(wire)).toEqual(chip);
    }
  });

  it('assembles the optimize request constraints field', () => {
    expect(serializeConstraints([])).toEqual({});
    const chips = [makeChip('min-size', ['hero'], { min_w: 0.2, min_h: 0.1 })];
    expect(serializeConstraints(chips, 5000, 8000)).toEqual({
      overlap_constant: 5000,
      boundary_constant: 8000,
      constraints: [{ kind: 'min-size', ids: ['hero'], min_w: 0.2, min_h: 0.1 }],
    });
  });
});
