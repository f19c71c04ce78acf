/** Inline banner for API failures. Every error lands here, none are dropped. */

import { ApiRequestError } from "./api.js";

export class ErrorBanner {
  private readonly el: HTMLElement;
  private readonly text: HTMLElement;

  constructor(container: HTMLElement) {
    this.el = document.createElement("div");
    this.el.className = "error-banner";
    this.el.hidden = true;

    this.text = document.createElement("span");

    const dismiss = document.createElement("button");
    dismiss.textContent = "Dismiss";
    dismiss.addEventListener("click", () => this.clear());

    this.el.append(this.text, dismiss);
    container.appendChild(this.el);
  }

  show(err: unknown): void {
    this.text.textContent = describeError(err);
    this.el.hidden = false;
  }

  clear(): void {
    this.el.hidden = true;
    this.text.textContent = "";
  }

  get visible(): boolean {
    return !this.el.hidden;
  }

  get message(): string {
    return this.text.textContent ?? "";
  }
}

export function describeError(err: unknown): string {
  if (err instanceof ApiRequestError) {
    if (err.status === 0) return `API unreachable: ${err.message}`;
    return `${err.code}: ${err.message}`;
  }
  if (err instanceof Error) return err.message;
  return String(err);
}
