/**
 * Lesson plan as a vertical outline.
 *
 * Main steps are a numbered list. A detour renders as an indented
 * block under its origin step, with a return arrow on its last line
 * pointing back at the step number the session resumes at. The
 * current step, main or sub, is highlighted.
 */

import type { DetourView, PlanView, StepView } from "./models.js";

export const RETURN_GLYPH = "↩";

export class PlanOutline {
  private readonly el: HTMLElement;
  private readonly title: HTMLElement;
  private readonly list: HTMLElement;

  constructor(container: HTMLElement) {
    this.el = document.createElement("section");
    this.el.className = "plan-outline";

    this.title = document.createElement("h2");
    this.list = document.createElement("ol");
    this.list.className = "plan-steps";

    this.el.append(this.title, this.list);
    container.appendChild(this.el);
  }

  render(plan: PlanView): void {
    this.title.textContent = plan.title;
    this.list.textContent = "";
    const indexByNode = new Map<number, number>();
    for (const step of plan.steps) {
      if (step.index !== undefined) indexByNode.set(step.node_id, step.index);
    }
    for (const step of plan.steps) {
      this.list.appendChild(this.renderStep(step, indexByNode));
    }
  }

  private renderStep(
    step: StepView,
    indexByNode: Map<number, number>,
  ): HTMLElement {
    const li = document.createElement("li");
    li.className = step.current ? "plan-step current" : "plan-step";
    li.dataset.nodeId = String(step.node_id);

    const label = document.createElement("span");
    label.textContent = step.has_exercise
      ? `${step.instruction} (exercise)`
      : step.instruction;
    li.appendChild(label);

    for (const detour of step.detours) {
      li.appendChild(this.renderDetour(detour, indexByNode));
    }
    return li;
  }

  private renderDetour(
    detour: DetourView,
    indexByNode: Map<number, number>,
  ): HTMLElement {
    const block = document.createElement("ul");
    block.className = "detour-block";
    for (const sub of detour.sub_steps) {
      block.appendChild(this.renderStep(sub, indexByNode));
    }
    const back = document.createElement("li");
    back.className = "detour-return";
    const origin = indexByNode.get(detour.returns_to);
    back.textContent =
      origin !== undefined
        ? `${RETURN_GLYPH} back to step ${origin}`
        : `${RETURN_GLYPH} back`;
    block.appendChild(back);
    return block;
  }
}
