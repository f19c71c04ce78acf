/**
 * Page bootstrap. Reads the static config the page loaded before this
 * script, builds the API client, and mounts one session view.
 */

import { ApiClient } from "./api.js";
import { SessionView } from "./app.js";

export interface PageConfig {
  apiBase?: string;
  token?: string;
  userName?: string;
  lessonFixture?: string;
}

declare global {
  interface Window {
    ITAS_CONFIG?: PageConfig;
  }
}

export function bootstrap(root: HTMLElement, config: PageConfig): SessionView {
  const api = new ApiClient(config.apiBase ?? "http://127.0.0.1:8410", {
    token: config.token,
  });
  const view = new SessionView(root, api, {
    userName: config.userName ?? "student",
    lessonFixture: config.lessonFixture ?? "quantum_fundamentals",
  });
  void view.start().catch((err) => {
    const note = document.createElement("p");
    note.className = "boot-error";
    note.textContent = `Could not open a session: ${String(err)}`;
    root.appendChild(note);
  });
  return view;
}

const mount = document.getElementById("app");
if (mount !== null) {
  bootstrap(mount, window.ITAS_CONFIG ?? {});
}
