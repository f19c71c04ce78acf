/**
 * Exercise code box. Nothing runs in the browser; the student writes
 * their attempt here and reports a pass, which goes to the backend as
 * a CodeSuccess event against the assignment.
 */

export class CodeBox {
  private readonly el: HTMLElement;
  private readonly area: HTMLTextAreaElement;
  private readonly submitBtn: HTMLButtonElement;

  constructor(container: HTMLElement, onSubmit: (code: string) => void) {
    this.el = document.createElement("section");
    this.el.className = "code-box";

    this.area = document.createElement("textarea");
    this.area.rows = 6;
    this.area.placeholder = "Work the exercise here";

    this.submitBtn = document.createElement("button");
    this.submitBtn.textContent = "Mark solved";
    this.submitBtn.addEventListener("click", () => {
      const code = this.area.value;
      if (code.trim() === "") return;
      onSubmit(code);
    });

    this.el.append(this.area, this.submitBtn);
    container.appendChild(this.el);
  }

  /** Show the box only while the current step carries an exercise. */
  setVisible(visible: boolean): void {
    this.el.hidden = !visible;
  }

  setBusy(busy: boolean): void {
    this.submitBtn.disabled = busy;
    this.area.disabled = busy;
  }

  get visible(): boolean {
    return !this.el.hidden;
  }
}
