/**
 * Session view: one student, one lesson run, one page.
 *
 * Owns the API client plumbing and the page layout, and wires the
 * widgets together. All mutating requests go through a single queue so
 * at most one is in flight at a time; user-initiated ones also lock
 * the controls until they settle.
 *
 * Assistant messages are rendered from the polled journal feed alone.
 * Tag and chat responses carry the same actions inline, but applying
 * both would double every message, so responses only trigger a plan
 * refresh and the feed stays the single source of transcript truth.
 */

import { ApiClient } from "./api.js";
import { ErrorBanner } from "./banner.js";
import { ChatPanel } from "./chat-panel.js";
import { CodeBox } from "./code-box.js";
import { EngagementChart } from "./engagement-chart.js";
import type {
  PlanView,
  RawEventBody,
  TagName,
  UpdateEntry,
} from "./models.js";
import { PlanOutline } from "./plan-outline.js";
import { UpdatePoller } from "./poller.js";
import { currentStep, StepPanel } from "./step-panel.js";
import { VideoPanel } from "./video.js";

export interface SessionViewOptions {
  userName: string;
  lessonFixture: string;
  pollIntervalMs?: number;
  engagementBinS?: number;
}

/** Journal kinds that mean the plan or position changed shape. */
const PLAN_CHANGING = new Set([
  "AdvanceStep",
  "EnterDetour",
  "ExitDetour",
  "CompleteLesson",
]);

export class SessionView {
  readonly poller: UpdatePoller;
  private readonly banner: ErrorBanner;
  private readonly stepPanel: StepPanel;
  private readonly outline: PlanOutline;
  private readonly chat: ChatPanel;
  private readonly codeBox: CodeBox;
  private readonly chart: EngagementChart;
  private video: VideoPanel | null = null;
  private readonly videoSlot: HTMLElement;

  private sessionId = "";
  private plan: PlanView | null = null;
  private busy = false;
  private finishing = false;
  private queue: Promise<void> = Promise.resolve();

  constructor(
    root: HTMLElement,
    private readonly api: ApiClient,
    private readonly options: SessionViewOptions,
  ) {
    this.banner = new ErrorBanner(root);
    this.stepPanel = new StepPanel(root);
    this.videoSlot = document.createElement("div");
    root.appendChild(this.videoSlot);

    const columns = document.createElement("div");
    columns.className = "columns";
    root.appendChild(columns);

    this.outline = new PlanOutline(columns);
    const right = document.createElement("div");
    right.className = "column-right";
    columns.appendChild(right);

    this.chat = new ChatPanel(right, {
      onChat: (text) => this.submitChat(text),
      onTag: (tag) => this.submitTag(tag),
    });
    this.codeBox = new CodeBox(right, (code) => this.submitCode(code));
    this.chart = new EngagementChart(root);

    this.poller = new UpdatePoller(
      (since) => this.api.fetchUpdates(this.sessionId, since),
      {
        onEntries: (entries) => this.applyEntries(entries),
        onError: (err) => this.banner.show(err),
      },
      options.pollIntervalMs ?? 1000,
    );
  }

  get id(): string {
    return this.sessionId;
  }

  /** Create the session, open the run, and start polling. */
  async start(): Promise<void> {
    const created = await this.api.createSession(
      this.options.userName,
      this.options.lessonFixture,
    );
    this.sessionId = created.session_id;
    await this.api.recordEvent(this.sessionId, { event_type: "LessonStart" });
    this.applyPlan(created.plan);

    if (created.plan.video !== null) {
      this.video = new VideoPanel(
        this.videoSlot,
        created.plan.video.duration_s,
        (body) => this.postVideoEvent(body),
      );
      await this.refreshChart();
    }
    this.poller.start();
  }

  /** Latest plan snapshot, for inspection and tests. */
  get planView(): PlanView | null {
    return this.plan;
  }

  /** Settles once every request queued so far has finished. */
  whenIdle(): Promise<void> {
    return this.queue;
  }

  dispose(): void {
    this.poller.stop();
    this.video?.dispose();
  }

  // -- mutations ---------------------------------------------------------

  private submitTag(tag: TagName): void {
    this.userAction(async () => {
      await this.api.sendTag(this.sessionId, tag);
      await this.refreshPlan();
    });
  }

  private submitChat(text: string): void {
    this.chat.addMessage("user", text);
    this.userAction(async () => {
      await this.api.sendChat(this.sessionId, text);
    });
  }

  private submitCode(code: string): void {
    this.userAction(async () => {
      await this.api.recordEvent(this.sessionId, {
        event_type: "CodeSuccess",
        target: "assignment",
        payload: code,
      });
    });
  }

  /** Video stub events ride the queue but do not lock the controls. */
  private postVideoEvent(body: RawEventBody): void {
    if (this.plan !== null && this.plan.phase === "Completed") {
      return;
    }
    this.enqueue(async () => {
      await this.api.recordEvent(this.sessionId, body);
      if (body.event_type === "VideoPause") {
        await this.refreshChart();
      }
    });
  }

  /**
   * Serialize one mutating request behind every earlier one. Failures
   * surface on the banner and never break the chain.
   */
  private enqueue(fn: () => Promise<void>): Promise<void> {
    const next = this.queue.then(fn).catch((err) => this.banner.show(err));
    this.queue = next;
    return next;
  }

  private userAction(fn: () => Promise<void>): void {
    if (this.busy) return;
    this.busy = true;
    this.chat.setBusy(true);
    this.codeBox.setBusy(true);
    void this.enqueue(fn).finally(() => {
      this.busy = false;
      this.chat.setBusy(false);
      this.codeBox.setBusy(false);
    });
  }

  // -- refresh paths -------------------------------------------------------

  private async applyEntries(entries: UpdateEntry[]): Promise<void> {
    let planChanged = false;
    for (const entry of entries) {
      if (entry.kind === "SendReply") {
        this.chat.addMessage("assistant", entry.text ?? "");
        if (entry.tool_calls && entry.tool_calls.length > 0) {
          this.chat.addToolCalls(entry.tool_calls);
          this.applyToolCalls(entry.tool_calls);
        }
      }
      if (PLAN_CHANGING.has(entry.kind)) planChanged = true;
    }
    if (planChanged) {
      await this.refreshPlan();
    }
  }

  private applyToolCalls(calls: UpdateEntry["tool_calls"]): void {
    if (!calls || this.video === null) return;
    for (const call of calls) {
      if (call.tool === "seek_video" && typeof call.timestamp_s === "number") {
        this.video.stub.seek(call.timestamp_s);
      } else if (
        call.tool === "show_segment" &&
        typeof call.start_s === "number"
      ) {
        this.video.stub.seek(call.start_s);
      }
    }
  }

  private async refreshPlan(): Promise<void> {
    const plan = await this.api.fetchPlan(this.sessionId);
    this.applyPlan(plan);
  }

  private applyPlan(plan: PlanView): void {
    this.plan = plan;
    this.stepPanel.render(plan);
    this.outline.render(plan);
    const step = currentStep(plan);
    this.codeBox.setVisible(
      plan.phase !== "Completed" && step !== null && step.has_exercise,
    );
    if (plan.phase === "Completed") {
      this.chat.deactivate();
      this.video?.stub.pause();
      this.finishPolling();
    }
  }

  /**
   * The journal is final once the run completes, but the entries that
   * announced completion may not have been polled yet. Drain them with
   * one last tick, then stop the loop.
   */
  private finishPolling(): void {
    if (this.finishing) return;
    this.finishing = true;
    void this.poller.tick().then(() => this.poller.stop());
  }

  private async refreshChart(): Promise<void> {
    try {
      const curve = await this.api.fetchEngagement(
        this.sessionId,
        this.options.engagementBinS ?? 15,
      );
      this.chart.render(curve);
    } catch (err) {
      this.banner.show(err);
    }
  }
}
