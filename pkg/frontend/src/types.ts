/**
 * Shared types mirroring the layoutforge service JSON schemas.
 *
 * The studio never computes predictions or penalties on its own; every
 * number shown in the UI comes back from the HTTP service, so these types
 * are the single source of truth for what crosses the wire.
 */

export interface ScreenSpec {
  width_px: number;
  height_px: number;
}

export type ElementKind =
  | 'icon'
  | 'icon-group-member'
  | 'button-group-member'
  | 'slider'
  | 'static-div'
  | 'drop-target';

export type ContainerKind = 'icon-group-container' | 'button-group-container';

export type Orientation = 'horizontal' | 'vertical' | 'none';

/** One element in the layout JSON. Containers live in their own list. */
export interface ElementJson {
  id: string;
  kind: ElementKind;
  label: string;
  cx: number;
  cy: number;
  w: number;
  h: number;
  orientation: Orientation;
  label_salience: number;
  container_id?: string;
  aspect_ratio?: number;
}

export interface ContainerJson {
  id: string;
  kind: ContainerKind;
  cx: number;
  cy: number;
  w: number;
  h: number;
  member_ids: string[];
}

export interface LayoutJson {
  screen: ScreenSpec;
  elements: ElementJson[];
  containers: ContainerJson[];
}

export type ConstraintKind = 'min-size' | 'equal-size' | 'alignment' | 'group-adjacency';

/** Serialized form accepted by POST /optimize under "constraints". */
export interface ConstraintJson {
  kind: ConstraintKind;
  ids: string[];
  constant?: number;
  min_w?: number;
  min_h?: number;
  gap_max?: number;
  axis?: 'x' | 'y';
}

export interface TaskStepJson {
  interaction: string;
  target_id: string;
  step_index: number;
  total_steps: number;
  destination_id?: string;
  slide_range?: [number, number];
}

export interface TaskJson {
  task_type: number;
  steps: TaskStepJson[];
  trial_index: number;
}

export interface SequenceJson {
  demographics: {
    frac_left_handed: number;
    avg_age_years: number;
  };
  tasks: TaskJson[];
}

/** Wrapper shape POST /optimize accepts under "constraints". */
export interface ConstraintsJson {
  overlap_constant?: number;
  boundary_constant?: number;
  constraints?: ConstraintJson[];
}

export interface PredictResponse {
  per_task: number[];
  total: number;
  feasible: boolean;
  penalty_values: {
    overlap: number;
    boundary: number;
  };
}

export interface OptimizeSubmitResponse {
  job_id: string;
}

export type JobState = 'queued' | 'running' | 'done' | 'failed';

export interface StepSummaryRow {
  index: number;
  objective: number;
  predicted_ms: number;
  overlap: number;
  boundary: number;
  constraints: number;
  feasible: boolean;
  swaps: Array<[string, string]>;
}

export interface JobStatus {
  id: string;
  state: JobState;
  progress: number;
  steps_total: number;
  best_step: number | null;
  aborted: string | null;
  error: string | null;
  steps: StepSummaryRow[];
}

export interface PixelRect {
  left: number;
  top: number;
  width: number;
  height: number;
}

export interface Rect {
  cx: number;
  cy: number;
  w: number;
  h: number;
}
