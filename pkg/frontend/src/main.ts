/**
 * App bootstrap: setup screen -> rating screen, plus the agreement tab.
 * The annotator id lives in browser local storage only; the service stays
 * stateless about identity.
 */

import { AnnotationApi, HttpApi } from "./api.js";
import { AgreementDashboard } from "./dashboard.js";
import { renderDashboard, renderRating, renderSetup } from "./render.js";
import { Rating, RatingSession } from "./session.js";

const STORAGE_KEY = "watertrav.annotator_id";

export interface App {
  session: RatingSession | null;
  handleKey(event: KeyboardEvent): void;
}

export function bootApp(root: HTMLElement, api: AnnotationApi = new HttpApi()): App {
  const app: App = {
    session: null,
    handleKey(event: KeyboardEvent) {
      if (!app.session) {
        return;
      }
      const target = event.target as HTMLElement | null;
      if (target && (target.tagName === "INPUT" || target.tagName === "SELECT")) {
        return;
      }
      if (app.session.handleKey(event.key)) {
        event.preventDefault();
      }
    },
  };

  const nav = document.createElement("nav");
  const rateTab = document.createElement("button");
  rateTab.id = "tab-rate";
  rateTab.textContent = "Rate";
  const statsTab = document.createElement("button");
  statsTab.id = "tab-stats";
  statsTab.textContent = "Agreement";
  nav.append(rateTab, statsTab);
  const screen = document.createElement("main");
  root.replaceChildren(nav, screen);

  const showRating = () => {
    if (!app.session) {
      void showSetup();
      return;
    }
    const session = app.session;
    screen.replaceChildren(
      renderRating(
        session.view(),
        (rating: Rating) => void session.submit(rating),
        () => session.skip(),
        () => session.toggleImage(),
      ),
    );
  };

  const showSetup = async () => {
    const robots = await api.robots();
    const remembered = window.localStorage.getItem(STORAGE_KEY) ?? "";
    screen.replaceChildren(
      renderSetup(robots, remembered, (annotator, robotId) => {
        window.localStorage.setItem(STORAGE_KEY, annotator);
        app.session = new RatingSession(api, annotator, robotId, () => showRating());
        void app.session.start();
      }),
    );
  };

  const showStats = () => {
    const dashboard = new AgreementDashboard(api, (view) => {
      screen.replaceChildren(renderDashboard(view));
    });
    screen.replaceChildren(renderDashboard(dashboard.view()));
    void dashboard.load();
  };

  rateTab.addEventListener("click", showRating);
  statsTab.addEventListener("click", showStats);
  window.addEventListener("keydown", app.handleKey);
  void showSetup();
  return app;
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  bootApp(document.getElementById("app") as HTMLElement);
}
