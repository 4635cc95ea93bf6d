/**
 * Timeline of one monitored optimization job.
 *
 * Submits the job, polls its status every 500 ms, caches per-step
 * objective values for the plot, tracks the best-step marker, and loads
 * individual step snapshots through the CSS/layout endpoints. At most one
 * job is monitored at a time; the canvas that spawned the job stays locked
 * until the job reaches a terminal state.
 */

import type { StudioApi } from './api';
import type { CanvasState } from './canvas';
import type { JobStatus, LayoutJson, SequenceJson, StepSummaryRow } from './types';

export const POLL_INTERVAL_MS = 500;

export class TimelineError extends Error {}

/** setTimeout-compatible hook so tests can drive time by hand. */
export type Scheduler = (callback: () => void, delayMs: number) => unknown;

export interface ObjectivePoint {
  index: number;
  objective: number;
  feasible: boolean;
}

export class TimelineState {
  private jobId: string | null = null;
  private cursorIndex = 0;
  private status: JobStatus | null = null;
  private objectiveCache: ObjectivePoint[] = [];
  private canvas: CanvasState | null = null;
  private polling = false;

  constructor(
    private readonly api: StudioApi,
    private readonly schedule: Scheduler = (cb, ms) => setTimeout(cb, ms),
  ) {}

  // ---- lifecycle --------------------------------------------------------

  get monitoredJob(): string | null {
    return this.jobId;
  }

  get jobState(): JobStatus | null {
    return this.status;
  }

  get isRunning(): boolean {
    return (
      this.jobId !== null &&
      (this.status === null || this.status.state === 'queued' || this.status.state === 'running')
    );
  }

  /**
   * Submit an optimization for the canvas layout and start monitoring it.
   * The canvas is locked for edits until the job finishes.
   */
  async run(
    canvas: CanvasState,
    sequence: SequenceJson,
    steps?: number,
  ): Promise<string> {
    if (this.isRunning) {
      throw new TimelineError(`already monitoring job ${this.jobId}`);
    }
    const body = {
      layout: canvas.toLayoutJson(),
      sequence,
      constraints: canvas.serializedConstraints(),
      ...(steps !== undefined ? { steps } : {}),
    };
    const { job_id } = await this.api.submitOptimize(body);
    this.jobId = job_id;
    this.status = null;
    this.objectiveCache = [];
    this.cursorIndex = 0;
    this.canvas = canvas;
    canvas.bindToJob(job_id);
    this.startPolling();
    return job_id;
  }

  private startPolling(): void {
    if (this.polling) {
      return;
    }
    this.polling = true;
    const tick = async (): Promise<void> => {
      if (this.jobId === null) {
        this.polling = false;
        return;
      }
      try {
        await this.refresh();
      } catch {
        // transient poll failure; try again on the next tick
      }
      if (this.isRunning) {
        this.schedule(() => void tick(), POLL_INTERVAL_MS);
      } else {
        this.polling = false;
        if (this.canvas) {
          this.canvas.releaseJob();
        }
      }
    };
    this.schedule(() => void tick(), POLL_INTERVAL_MS);
  }

  /** Fetch the latest job status and fold new steps into the plot cache. */
  async refresh(): Promise<JobStatus> {
    if (this.jobId === null) {
      throw new TimelineError('no job is being monitored');
    }
    const status = await this.api.jobStatus(this.jobId);
    this.status = status;
    for (const row of status.steps) {
      if (row.index >= this.objectiveCache.length) {
        this.objectiveCache.push({
          index: row.index,
          objective: row.objective,
          feasible: row.feasible,
        });
      }
    }
    if (!this.isRunning && this.canvas) {
      this.canvas.releaseJob();
    }
    return status;
  }

  // ---- cursor and plot --------------------------------------------------

  get cursor(): number {
    return this.cursorIndex;
  }

  /** Move the step cursor, clamped to the reported progress. */
  seek(index: number): number {
    const limit = this.status ? this.status.progress : 0;
    this.cursorIndex = Math.max(0, Math.min(index, limit));
    return this.cursorIndex;
  }

  /** Cached (step, objective) points for the plot, in step order. */
  objectiveSeries(): ReadonlyArray<ObjectivePoint> {
    return this.objectiveCache;
  }

  /** Number of scrubberable steps: descent steps plus the initial state. */
  get length(): number {
    return this.status ? this.status.steps.length : 0;
  }

  get bestStep(): number | null {
    return this.status ? this.status.best_step : null;
  }

  stepRow(index: number): StepSummaryRow {
    if (!this.status) {
      throw new TimelineError('no status yet');
    }
    const row = this.status.steps.find((s) => s.index === index);
    if (!row) {
      throw new TimelineError(`no step ${index} in job ${this.jobId}`);
    }
    return row;
  }

  // ---- snapshot loading -------------------------------------------------

  loadStepCss(index: number): Promise<string> {
    if (this.jobId === null) {
      throw new TimelineError('no job is being monitored');
    }
    return this.api.stepCss(this.jobId, index);
  }

  loadStepLayout(index: number): Promise<LayoutJson> {
    if (this.jobId === null) {
      throw new TimelineError('no job is being monitored');
    }
    return this.api.stepLayout(this.jobId, index);
  }

  loadBestLayout(): Promise<LayoutJson> {
    if (this.jobId === null) {
      throw new TimelineError('no job is being monitored');
    }
    return this.api.bestLayout(this.jobId);
  }

  /**
   * Replace the canvas layout with a step's snapshot so the user can
   * refine it and run again. Only valid once the job has finished; the
   * timeline detaches from the job so a new run can start immediately.
   */
  async adoptStep(index: number): Promise<LayoutJson> {
    if (this.isRunning) {
      throw new TimelineError('job is still running');
    }
    const layout = await this.loadStepLayout(index);
    if (this.canvas) {
      this.canvas.releaseJob();
      this.canvas.replaceLayout(layout);
    }
    this.jobId = null;
    this.status = null;
    this.objectiveCache = [];
    this.cursorIndex = 0;
    this.canvas = null;
    return layout;
  }

  /** Drop the finished job so a new run can be monitored. */
  reset(): void {
    if (this.isRunning) {
      throw new TimelineError('cannot reset while a job is running');
    }
    if (this.canvas) {
      this.canvas.releaseJob();
    }
    this.jobId = null;
    this.status = null;
    this.objectiveCache = [];
    this.cursorIndex = 0;
    this.canvas = null;
  }
}
