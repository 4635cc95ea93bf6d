/**
 * Side-by-side comparison of two layouts on the same task sequence.
 *
 * Both layouts go through POST /predict; the view shows per-task deltas
 * (b minus a), so negative numbers mean the second layout is predicted
 * faster. The totals delta always equals the sum of per-task deltas.
 */

import type { StudioApi } from './api';
import type { LayoutJson, PredictResponse, SequenceJson } from './types';

export interface TaskDelta {
  taskIndex: number;
  aMs: number;
  bMs: number;
  /** b - a; negative means layout b is predicted faster. */
  deltaMs: number;
}

export interface ComparisonResult {
  a: PredictResponse;
  b: PredictResponse;
  perTask: TaskDelta[];
  /** Sum of per-task deltas; negative means b improves on a overall. */
  totalDeltaMs: number;
}

export async function compareLayouts(
  api: StudioApi,
  layoutA: LayoutJson,
  layoutB: LayoutJson,
  sequence: SequenceJson,
): Promise<ComparisonResult> {
  const [a, b] = await Promise.all([
    api.predict(layoutA, sequence),
    api.predict(layoutB, sequence),
  ]);
  if (a.per_task.length !== b.per_task.length) {
    throw new Error(
      `predictions disagree on task count: ${a.per_task.length} vs ${b.per_task.length}`,
    );
  }
  const perTask: TaskDelta[] = a.per_task.map((aMs, i) => ({
    taskIndex: i,
    aMs,
    bMs: b.per_task[i],
    deltaMs: b.per_task[i] - aMs,
  }));
  const totalDeltaMs = perTask.reduce((acc, d) => acc + d.deltaMs, 0);
  return { a, b, perTask, totalDeltaMs };
}
