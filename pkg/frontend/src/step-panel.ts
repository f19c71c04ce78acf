/**
 * Current-step panel: phase badge, step counter, instruction text.
 * Everything shown is read off the latest plan response.
 */

import type { PlanView, StepView } from "./models.js";

/** Depth-first walk over main steps and their detour sub-steps. */
export function* walkSteps(plan: PlanView): Generator<StepView> {
  function* visit(step: StepView): Generator<StepView> {
    yield step;
    for (const detour of step.detours) {
      for (const sub of detour.sub_steps) yield* visit(sub);
    }
  }
  for (const step of plan.steps) yield* visit(step);
}

export function currentStep(plan: PlanView): StepView | null {
  for (const step of walkSteps(plan)) {
    if (step.current) return step;
  }
  return null;
}

export class StepPanel {
  private readonly el: HTMLElement;
  private readonly badge: HTMLElement;
  private readonly counter: HTMLElement;
  private readonly instruction: HTMLElement;

  constructor(container: HTMLElement) {
    this.el = document.createElement("section");
    this.el.className = "step-panel";

    this.badge = document.createElement("span");
    this.badge.className = "phase-badge";

    this.counter = document.createElement("span");
    this.counter.className = "step-counter";

    this.instruction = document.createElement("p");
    this.instruction.className = "step-instruction";

    const head = document.createElement("div");
    head.className = "step-head";
    head.append(this.badge, this.counter);
    this.el.append(head, this.instruction);
    container.appendChild(this.el);
  }

  render(plan: PlanView): void {
    this.badge.textContent = plan.phase;
    this.badge.className = `phase-badge phase-${plan.phase.toLowerCase()}`;

    if (plan.phase === "Completed") {
      this.counter.textContent = `${plan.steps.length} of ${plan.steps.length}`;
      this.instruction.textContent = "Lesson complete.";
      return;
    }
    const step = currentStep(plan);
    if (step === null) {
      this.counter.textContent = "";
      this.instruction.textContent = "";
      return;
    }
    if (step.index !== undefined) {
      this.counter.textContent = `Step ${step.index} of ${plan.steps.length}`;
    } else {
      this.counter.textContent = `Detour step ${step.sub_index ?? "?"}`;
    }
    this.instruction.textContent = step.instruction;
  }
}
