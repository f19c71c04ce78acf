/**
 * Shapes of the session API's request and response bodies.
 *
 * These mirror the server's JSON contract field for field. Nothing in
 * here is invented client-side; if a field is missing from a response
 * the server does not send it.
 */

/** Phase labels the server reports for a session. */
export type Phase = "InLesson" | "InDetour" | "Completed";

/** The four student tags. Exactly these, no more. */
export const TAGS = ["Ready", "Hint", "Media", "Confusion"] as const;
export type TagName = (typeof TAGS)[number];

/** One step as the plan endpoint describes it. */
export interface StepView {
  node_id: number;
  instruction: string;
  video_segment: [number, number] | null;
  has_exercise: boolean;
  current: boolean;
  /** 1-based position on the main chain; absent on sub-steps. */
  index?: number;
  /** 1-based position inside a detour; absent on main steps. */
  sub_index?: number;
  detours: DetourView[];
}

/** A sub-lesson hanging off a main step. */
export interface DetourView {
  returns_to: number;
  sub_steps: StepView[];
}

export interface PlanView {
  lesson_id: number;
  title: string;
  objective: string;
  video: { ref: string; duration_s: number } | null;
  steps: StepView[];
  phase: Phase;
}

/** Server-side session state echoed by mutating calls. */
export interface StateView {
  phase: Phase;
  position: number;
  step_index: number;
  in_detour: boolean;
  summary_id: number | null;
}

export interface SessionCreated {
  session_id: string;
  plan: PlanView;
  entities: {
    user: number;
    assistant: number;
    lesson: number;
    assignment: number;
  };
}

/** A tool call the assistant asked the client to perform. */
export interface ToolCallView {
  tool: string;
  [arg: string]: unknown;
}

export interface ReplyView {
  text: string;
  tool_calls: ToolCallView[];
}

export interface ChatResponse {
  reply: ReplyView;
  state: StateView;
}

export interface TagResponse {
  actions: ActionView[];
  state: StateView;
}

/**
 * One journalled orchestrator action. `kind` discriminates; the other
 * fields depend on it (AdvanceStep carries `to`, SendReply carries
 * `text` and `tool_calls`, and so on).
 */
export interface ActionView {
  kind: string;
  to?: number;
  origin?: number;
  sub_step_ids?: number[];
  summary_id?: number;
  text?: string;
  tool_calls?: ToolCallView[];
  hint_level?: number | null;
  event_type?: string;
  node_id?: number;
  target?: number | null;
  containment?: number;
  redacted?: boolean;
  channel?: string;
}

/** Journal entry from the updates feed: an action plus its sequence. */
export interface UpdateEntry extends ActionView {
  seq: number;
  at_ms: number;
}

export interface UpdatesPage {
  updates: UpdateEntry[];
  latest_seq: number;
}

export interface EngagementBin {
  bin_start_s: number;
  intensity: number;
}

export interface EngagementCurveView {
  bin_width_s: number;
  duration_s: number;
  bins: EngagementBin[];
}

/** Body for POST /sessions/{id}/events. Wall time is server-assigned. */
export interface RawEventBody {
  event_type: string;
  actor?: "user" | "assistant" | number;
  target?: string | number | null;
  video_time?: number;
  from_time?: number;
  to_time?: number;
  payload?: unknown;
}

export interface EventAccepted {
  event_node_id: number;
}

/** Error envelope every non-2xx response carries. */
export interface ErrorBody {
  error: { code: string; message: string };
}
