/**
 * Engagement curve as an inline SVG bar chart: one bar per bin,
 * height proportional to how many watch intervals covered the bin's
 * midpoint. No chart library; a handful of rects is enough.
 */

import type { EngagementCurveView } from "./models.js";

const SVG_NS = "http://www.w3.org/2000/svg";

export class EngagementChart {
  private readonly el: HTMLElement;
  private readonly svg: SVGSVGElement;

  constructor(
    container: HTMLElement,
    private readonly width = 600,
    private readonly height = 80,
  ) {
    this.el = document.createElement("section");
    this.el.className = "engagement-chart";

    const heading = document.createElement("h2");
    heading.textContent = "Engagement";

    this.svg = document.createElementNS(SVG_NS, "svg");
    this.svg.setAttribute("viewBox", `0 0 ${this.width} ${this.height}`);
    this.svg.setAttribute("width", String(this.width));
    this.svg.setAttribute("height", String(this.height));

    this.el.append(heading, this.svg);
    container.appendChild(this.el);
  }

  render(curve: EngagementCurveView): void {
    this.svg.textContent = "";
    const bins = curve.bins;
    if (bins.length === 0) return;
    const peak = Math.max(1, ...bins.map((b) => b.intensity));
    const barWidth = this.width / bins.length;
    for (let i = 0; i < bins.length; i++) {
      const intensity = bins[i].intensity;
      if (intensity <= 0) continue;
      const barHeight = (intensity / peak) * this.height;
      const rect = document.createElementNS(SVG_NS, "rect");
      rect.setAttribute("x", String(i * barWidth));
      rect.setAttribute("y", String(this.height - barHeight));
      rect.setAttribute("width", String(Math.max(barWidth - 1, 1)));
      rect.setAttribute("height", String(barHeight));
      rect.setAttribute("class", "engagement-bar");
      const title = document.createElementNS(SVG_NS, "title");
      title.textContent = `${bins[i].bin_start_s}s: ${intensity}`;
      rect.appendChild(title);
      this.svg.appendChild(rect);
    }
  }

  get barCount(): number {
    return this.svg.querySelectorAll("rect").length;
  }
}
