/**
 * Chat transcript, message input, and the four tag buttons.
 *
 * The tags are the student's pacing controls, so all four stay one
 * click away for the whole session. The panel does not talk to the API
 * itself; it raises callbacks and lets the owner serialize requests.
 * While a request is pending the owner calls setBusy(true) and every
 * control here locks until the reply lands.
 */

import { TAGS, type TagName, type ToolCallView } from "./models.js";

export interface ChatPanelHandlers {
  onChat: (text: string) => void;
  onTag: (tag: TagName) => void;
}

export class ChatPanel {
  private readonly el: HTMLElement;
  private readonly log: HTMLElement;
  private readonly input: HTMLInputElement;
  private readonly sendBtn: HTMLButtonElement;
  private readonly tagBtns: HTMLButtonElement[] = [];
  private active = true;

  constructor(container: HTMLElement, handlers: ChatPanelHandlers) {
    this.el = document.createElement("section");
    this.el.className = "chat-panel";

    this.log = document.createElement("div");
    this.log.className = "chat-log";

    const tagRow = document.createElement("div");
    tagRow.className = "tag-row";
    for (const tag of TAGS) {
      const btn = document.createElement("button");
      btn.className = "tag-button";
      btn.dataset.tag = tag;
      btn.textContent = tag;
      btn.addEventListener("click", () => handlers.onTag(tag));
      this.tagBtns.push(btn);
      tagRow.appendChild(btn);
    }

    const inputRow = document.createElement("div");
    inputRow.className = "chat-input-row";
    this.input = document.createElement("input");
    this.input.type = "text";
    this.input.placeholder = "Ask the assistant";
    this.sendBtn = document.createElement("button");
    this.sendBtn.textContent = "Send";

    const submit = () => {
      const text = this.input.value.trim();
      if (text === "") return;
      this.input.value = "";
      handlers.onChat(text);
    };
    this.sendBtn.addEventListener("click", submit);
    this.input.addEventListener("keydown", (ev) => {
      if (ev.key === "Enter") submit();
    });

    inputRow.append(this.input, this.sendBtn);
    this.el.append(this.log, tagRow, inputRow);
    container.appendChild(this.el);
  }

  addMessage(role: "user" | "assistant", text: string): void {
    const row = document.createElement("div");
    row.className = `chat-message ${role}`;
    const who = document.createElement("strong");
    who.textContent = role === "user" ? "You" : "Assistant";
    const body = document.createElement("span");
    body.textContent = text;
    row.append(who, body);
    this.log.appendChild(row);
    this.log.scrollTop = this.log.scrollHeight;
  }

  addToolCalls(calls: ToolCallView[]): void {
    for (const call of calls) {
      const row = document.createElement("div");
      row.className = "chat-message tool-call";
      const args = Object.entries(call)
        .filter(([key]) => key !== "tool")
        .map(([key, value]) => `${key}=${String(value)}`)
        .join(" ");
      row.textContent = args === "" ? call.tool : `${call.tool} ${args}`;
      this.log.appendChild(row);
    }
  }

  /** Lock or unlock every mutating control. */
  setBusy(busy: boolean): void {
    this.apply(busy || !this.active);
  }

  /** Completed sessions take no more input; shut the panel down. */
  deactivate(): void {
    this.active = false;
    this.apply(true);
  }

  get messages(): string[] {
    return Array.from(this.log.children).map((c) => c.textContent ?? "");
  }

  private apply(disabled: boolean): void {
    for (const btn of this.tagBtns) btn.disabled = disabled;
    this.sendBtn.disabled = disabled;
    this.input.disabled = disabled;
  }
}
