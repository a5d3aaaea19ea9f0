/** DOM rendering for the two screens. Kept dumb: views in, elements out. */

import { Robot } from "./api.js";
import { DashboardView } from "./dashboard.js";
import { RATING_LABELS, Rating, SessionView } from "./session.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  node.append(...children);
  return node;
}

export function renderSetup(
  robots: Robot[],
  initialAnnotator: string,
  onStart: (annotator: string, robotId: string) => void,
): HTMLElement {
  const annotatorInput = el("input", {
    id: "annotator-input",
    placeholder: "annotator id",
    value: initialAnnotator,
  });
  const robotSelect = el("select", { id: "robot-select" });
  for (const robot of robots) {
    robotSelect.append(el("option", { value: robot.id }, robot.display_name));
  }
  const startButton = el("button", { id: "start-button", class: "primary" }, "Start rating");
  startButton.addEventListener("click", () => {
    if (annotatorInput.value.trim() && robotSelect.value) {
      onStart(annotatorInput.value.trim(), robotSelect.value);
    }
  });
  return el(
    "div",
    { class: "setup" },
    el("h1", {}, "Water traversability rating"),
    el("label", {}, "Who is rating? ", annotatorInput),
    el("label", {}, "Robot: ", robotSelect),
    startButton,
  );
}

export function renderRating(view: SessionView, onRate: (r: Rating) => void, onSkip: () => void, onToggle: () => void): HTMLElement {
  const root = el("div", { class: "rating-screen" });
  if (view.kind === "loading") {
    root.append(el("p", {}, "loading tasks..."));
    return root;
  }
  if (view.kind === "done" || !view.task) {
    root.append(
      el("div", { class: "done" }, el("h2", {}, "All done"), el("p", { id: "done-count" }, `${view.rated} of ${view.total} instances rated. Thank you!`)),
    );
    return root;
  }

  const task = view.task;
  root.append(
    el(
      "div",
      { class: "progress", id: "progress" },
      `${view.rated} / ${view.total} rated - ${task.instance_id} for ${task.robot_id}`,
    ),
  );
  if (view.banner) {
    root.append(
      el(
        "div",
        { class: `banner ${view.banner.kind}`, id: "banner" },
        `${view.banner.rule}: ${view.banner.detail}`,
      ),
    );
  }
  if (view.lastSaved) {
    root.append(
      el("div", { class: "saved", id: "saved-indicator" }, `saved ${view.lastSaved.instanceId} = ${view.lastSaved.rating}`),
    );
  }
  const img = el("img", {
    id: "task-image",
    src: view.imageMode === "crop" ? task.crop_url : task.image_url,
    alt: view.imageMode === "crop" ? "instance crop" : "full image",
  });
  img.addEventListener("click", onToggle);
  root.append(el("div", { class: "image-wrap" }, img));
  root.append(el("p", { class: "hint" }, `${task.task} (space toggles crop/full image)`));
  root.append(el("p", { class: "scheme" }, task.scheme));

  const buttons = el("div", { class: "buttons" });
  ([1, 2, 3, 4] as Rating[]).forEach((rating) => {
    const button = el(
      "button",
      { class: `rate rate-${rating}`, id: `rate-${rating}` },
      `${rating} ${RATING_LABELS[rating]}`,
    );
    button.addEventListener("click", () => onRate(rating));
    if (view.saving) {
      button.setAttribute("disabled", "disabled");
    }
    buttons.append(button);
  });
  const skip = el("button", { class: "skip", id: "skip-button" }, "skip (s)");
  skip.addEventListener("click", onSkip);
  buttons.append(skip);
  root.append(buttons);
  if (view.saving) {
    root.append(el("p", { class: "saving", id: "saving-indicator" }, "saving..."));
  }
  return root;
}

export function renderDashboard(view: DashboardView): HTMLElement {
  const root = el("div", { class: "dashboard" }, el("h2", {}, "Annotator agreement"));
  if (view.kind === "loading") {
    root.append(el("p", {}, "loading stats..."));
    return root;
  }
  if (view.kind === "empty") {
    root.append(el("p", { id: "empty-state" }, "no annotations yet"));
    return root;
  }
  const chart = el("div", { class: "chart", id: "agreement-chart" });
  for (const bar of view.bars) {
    const column = el("div", { class: "bar-col" });
    const barEl = el("div", {
      class: "bar",
      "data-count": String(bar.count),
      style: `height: ${bar.heightPct.toFixed(1)}%`,
      title: `${bar.label}: ${bar.count}`,
    });
    column.append(
      el("div", { class: "bar-count" }, String(bar.count)),
      barEl,
      el("div", { class: "bar-label" }, bar.label),
    );
    chart.append(column);
  }
  root.append(chart);

  const table = el(
    "table",
    { class: "disagreement", id: "disagreement-table" },
    el("tr", {}, el("th", {}, ""), el("th", {}, "instance"), el("th", {}, "robot"), el("th", {}, "std dev")),
  );
  for (const row of view.rows) {
    table.append(
      el(
        "tr",
        { "data-std": String(row.std_dev) },
        el("td", {}, el("img", { src: row.thumbnail_url, class: "thumb", alt: row.instance_id })),
        el("td", {}, row.instance_id),
        el("td", {}, row.robot_id),
        el("td", {}, row.std_dev.toFixed(3)),
      ),
    );
  }
  root.append(el("h3", {}, "Highest disagreement"), table);
  return root;
}
