/**
 * Journal polling loop.
 *
 * Asks the updates endpoint for entries past a cursor once per second,
 * hands new entries to the listener, and advances the cursor to the
 * page's latest sequence. Failed polls are reported, never swallowed,
 * and the cursor stays put so the next beat retries the same window.
 */

import type { UpdateEntry, UpdatesPage } from "./models.js";

export type UpdatesFetcher = (sinceSeq: number) => Promise<UpdatesPage>;

export interface PollerHooks {
  onEntries: (entries: UpdateEntry[]) => void | Promise<void>;
  onError?: (err: unknown) => void;
}

export class UpdatePoller {
  private cursor = 0;
  private timer: ReturnType<typeof setInterval> | null = null;
  private inFlight = false;

  constructor(
    private readonly fetchUpdates: UpdatesFetcher,
    private readonly hooks: PollerHooks,
    private readonly intervalMs = 1000,
  ) {}

  get sinceSeq(): number {
    return this.cursor;
  }

  get running(): boolean {
    return this.timer !== null;
  }

  start(): void {
    if (this.timer !== null) return;
    this.timer = setInterval(() => {
      void this.tick();
    }, this.intervalMs);
  }

  stop(): void {
    if (this.timer === null) return;
    clearInterval(this.timer);
    this.timer = null;
  }

  /** One poll beat. Public so callers can force a refresh right away. */
  async tick(): Promise<void> {
    if (this.inFlight) return;
    this.inFlight = true;
    try {
      const page = await this.fetchUpdates(this.cursor);
      if (page.updates.length > 0) {
        this.cursor = page.latest_seq;
        await this.hooks.onEntries(page.updates);
      }
    } catch (err) {
      this.hooks.onError?.(err);
    } finally {
      this.inFlight = false;
    }
  }
}
