/**
 * Video timeline stub.
 *
 * There is no media here, just a clock the student can run, pause, and
 * scrub. What the backend consumes is the event stream, so that is all
 * the stub produces: VideoPlay, VideoPause, VideoSeeked, and a
 * VideoHeartbeat after every full 15 seconds of continuous playback.
 * Playback restarts the heartbeat countdown; so does a seek.
 */

import type { RawEventBody } from "./models.js";

export type VideoEventSink = (body: RawEventBody) => void;

export const HEARTBEAT_CADENCE_S = 15;

export class VideoStub {
  private positionS = 0;
  private playing = false;
  private playedSincePulse = 0;

  constructor(
    readonly durationS: number,
    private readonly sink: VideoEventSink,
    private readonly cadenceS: number = HEARTBEAT_CADENCE_S,
  ) {}

  get position(): number {
    return this.positionS;
  }

  get isPlaying(): boolean {
    return this.playing;
  }

  play(): void {
    if (this.playing || this.positionS >= this.durationS) return;
    this.playing = true;
    this.playedSincePulse = 0;
    this.sink({ event_type: "VideoPlay", video_time: this.positionS });
  }

  pause(): void {
    if (!this.playing) return;
    this.playing = false;
    this.sink({ event_type: "VideoPause", video_time: this.positionS });
  }

  seek(toS: number): void {
    const target = Math.min(Math.max(toS, 0), this.durationS);
    if (target === this.positionS) return;
    const from = this.positionS;
    this.positionS = target;
    this.playedSincePulse = 0;
    this.sink({ event_type: "VideoSeeked", from_time: from, to_time: target });
  }

  /**
   * Run the playhead forward by `seconds` of simulated time. Does
   * nothing while paused. Reaching the end of the timeline pauses.
   */
  advance(seconds: number): void {
    let left = seconds;
    while (this.playing && left > 0) {
      const untilPulse = this.cadenceS - this.playedSincePulse;
      const untilEnd = this.durationS - this.positionS;
      const step = Math.min(left, untilPulse, untilEnd);
      this.positionS += step;
      this.playedSincePulse += step;
      left -= step;
      if (this.playedSincePulse >= this.cadenceS) {
        this.sink({
          event_type: "VideoHeartbeat",
          video_time: this.positionS,
        });
        this.playedSincePulse = 0;
      }
      if (this.positionS >= this.durationS) {
        this.pause();
        return;
      }
    }
  }
}

/**
 * Transport controls around a VideoStub: play and pause buttons, a
 * scrub slider, and a position readout. A one-second interval drives
 * the stub while it plays, so one wall second is one timeline second.
 */
export class VideoPanel {
  readonly stub: VideoStub;
  private readonly el: HTMLElement;
  private readonly playBtn: HTMLButtonElement;
  private readonly pauseBtn: HTMLButtonElement;
  private readonly slider: HTMLInputElement;
  private readonly readout: HTMLElement;
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(container: HTMLElement, durationS: number, sink: VideoEventSink) {
    this.stub = new VideoStub(durationS, sink);
    this.el = document.createElement("div");
    this.el.className = "video-panel";

    this.playBtn = document.createElement("button");
    this.playBtn.textContent = "Play";
    this.playBtn.addEventListener("click", () => {
      this.stub.play();
      this.refresh();
    });

    this.pauseBtn = document.createElement("button");
    this.pauseBtn.textContent = "Pause";
    this.pauseBtn.addEventListener("click", () => {
      this.stub.pause();
      this.refresh();
    });

    this.slider = document.createElement("input");
    this.slider.type = "range";
    this.slider.min = "0";
    this.slider.max = String(durationS);
    this.slider.value = "0";
    this.slider.addEventListener("change", () => {
      this.stub.seek(Number(this.slider.value));
      this.refresh();
    });

    this.readout = document.createElement("span");
    this.readout.className = "video-readout";

    this.el.append(this.playBtn, this.pauseBtn, this.slider, this.readout);
    container.appendChild(this.el);
    this.refresh();

    this.timer = setInterval(() => {
      if (this.stub.isPlaying) {
        this.stub.advance(1);
        this.refresh();
      }
    }, 1000);
  }

  dispose(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  private refresh(): void {
    this.slider.value = String(this.stub.position);
    this.readout.textContent = `${formatTime(this.stub.position)} / ${formatTime(this.stub.durationS)}`;
    this.playBtn.disabled = this.stub.isPlaying;
    this.pauseBtn.disabled = !this.stub.isPlaying;
  }
}

export function formatTime(seconds: number): string {
  const whole = Math.floor(seconds);
  const m = Math.floor(whole / 60);
  const s = whole % 60;
  return `${m}:${String(s).padStart(2, "0")}`;
}
