/**
 * Rating-session state machine, free of DOM concerns so it can be tested
 * against a mocked API.
 *
 * One submission is in flight at most; keypresses arriving while saving are
 * ignored until the acknowledgment, and the screen advances only after the
 * service has acknowledged the write. Validation rejections show the rule
 * name and keep the current task; transport failures keep the chosen rating
 * pending behind a non-blocking retry banner.
 */

import { AnnotationApi, ApiError, NetworkError, Task } from "./api.js";

export type Rating = 1 | 2 | 3 | 4;

export const RATING_LABELS: Record<Rating, string> = {
  1: "smooth",
  2: "rough",
  3: "bumpy",
  4: "non-navigable/forbidden",
};

export interface Banner {
  kind: "error" | "retry";
  rule: string;
  detail: string;
}

export interface SessionView {
  kind: "loading" | "rating" | "done";
  task: Task | null;
  imageMode: "crop" | "full";
  rated: number;
  total: number;
  saving: boolean;
  banner: Banner | null;
  /** set only after a service acknowledgment */
  lastSaved: { instanceId: string; rating: Rating } | null;
}

export class RatingSession {
  private queue: Task[] = [];
  private rated = 0;
  private total = 0;
  private imageMode: "crop" | "full" = "crop";
  private saving = false;
  private banner: Banner | null = null;
  private lastSaved: { instanceId: string; rating: Rating } | null = null;
  private pendingRetry: Rating | null = null;
  private loaded = false;

  constructor(
    private readonly api: AnnotationApi,
    readonly annotatorId: string,
    readonly robotId: string,
    private readonly onChange: (view: SessionView) => void = () => {},
  ) {
    if (!annotatorId.trim()) {
      throw new Error("annotator id must be set before rating");
    }
    if (!robotId.trim()) {
      throw new Error("a robot must be selected before rating");
    }
  }

  async start(): Promise<void> {
    const tasks = await this.api.tasks(this.annotatorId, this.robotId);
    this.queue = tasks.filter((task) => !task.already_rated);
    this.total = tasks.length;
    this.rated = this.total - this.queue.length;
    this.loaded = true;
    this.emit();
  }

  view(): SessionView {
    const task = this.queue.length > 0 ? (this.queue[0] ?? null) : null;
    return {
      kind: !this.loaded ? "loading" : task === null ? "done" : "rating",
      task,
      imageMode: this.imageMode,
      rated: this.rated,
      total: this.total,
      saving: this.saving,
      banner: this.banner,
      lastSaved: this.lastSaved,
    };
  }

  private emit(): void {
    this.onChange(this.view());
  }

  /** Returns true when the key was consumed. Keys: 1-4 rate, space toggles
   * crop/full, s skips, r retries a transport-failed submission. */
  handleKey(key: string): boolean {
    if (!this.loaded || this.saving) {
      return false;
    }
    if (key === " ") {
      this.toggleImage();
      return true;
    }
    if (key === "s" || key === "S") {
      this.skip();
      return true;
    }
    if (key === "r" || key === "R") {
      return this.retry();
    }
    if (["1", "2", "3", "4"].includes(key)) {
      void this.submit(Number(key) as Rating);
      return true;
    }
    return false;
  }

  toggleImage(): void {
    this.imageMode = this.imageMode === "crop" ? "full" : "crop";
    this.emit();
  }

  /** Put the current task at the back of the queue without rating it. */
  skip(): void {
    if (this.queue.length > 1) {
      const current = this.queue.shift();
      if (current) {
        this.queue.push(current);
      }
    }
    this.banner = null;
    this.imageMode = "crop";
    this.emit();
  }

  retry(): boolean {
    if (this.pendingRetry === null) {
      return false;
    }
    const rating = this.pendingRetry;
    this.pendingRetry = null;
    void this.submit(rating);
    return true;
  }

  async submit(rating: Rating): Promise<void> {
    const task = this.queue[0];
    if (!task || this.saving) {
      return;
    }
    this.saving = true;
    this.banner = null;
    this.emit();
    try {
      const ack = await this.api.submit({
        annotator_id: this.annotatorId,
        instance_id: task.instance_id,
        robot_id: task.robot_id,
        rating,
      });
      if (!ack.ok) {
        throw new NetworkError("service did not acknowledge the write");
      }
      // acknowledged: only now mark saved and advance
      this.lastSaved = { instanceId: task.instance_id, rating };
      this.queue.shift();
      this.rated += 1;
      this.imageMode = "crop";
      this.saving = false;
      this.emit();
    } catch (err) {
      this.saving = false;
      if (err instanceof ApiError) {
        // validation rejection: show the rule, stay on the task
        this.banner = { kind: "error", rule: err.rule, detail: err.detail };
      } else {
        // transport failure: keep the rating pending behind a retry banner
        this.pendingRetry = rating;
        this.banner = {
          kind: "retry",
          rule: "network",
          detail: `could not reach the service (rating ${rating} kept, press r to retry)`,
        };
      }
      this.emit();
    }
  }
}
