import { AgreementStats, AnnotationApi, ApiError, NetworkError, Robot, SubmitAck, Submission, Task } from "../src/api.js";

export function makeTask(i: number, robot = "husky_a200", alreadyRated = false): Task {
  const id = `instance_${String(i).padStart(3, "0")}`;
  return {
    instance_id: id,
    robot_id: robot,
    image_url: `/media/images/img_${String(Math.floor(i / 2)).padStart(3, "0")}.png`,
    crop_url: `/media/crops/${id}.png`,
    scheme: "1 - smooth, 2 - rough, 3 - bumpy, 4 - non-navigable/forbidden",
    task: "Judge whether the robot could traverse the water body shown without getting stuck or damaged.",
    already_rated: alreadyRated,
  };
}

export const ROBOTS: Robot[] = [
  { id: "husky_a200", display_name: "Clearpath Husky A200", prompt_description: "wheeled" },
  { id: "unitree_b1", display_name: "Unitree B1", prompt_description: "quadruped" },
];

export const EMPTY_STATS: AgreementStats = { bin_width: 0.25, edges: [], counts: [], per_key: [] };

type SubmitMode =
  | { kind: "ack" }
  | { kind: "manual" }
  | { kind: "reject"; rule: string; detail: string }
  | { kind: "network" };

export class MockApi implements AnnotationApi {
  submissions: Submission[] = [];
  taskList: Task[] = [];
  stats: AgreementStats = EMPTY_STATS;
  submitMode: SubmitMode = { kind: "ack" };
  private pending: Array<(ack: SubmitAck) => void> = [];

  async robots(): Promise<Robot[]> {
    return ROBOTS;
  }

  async tasks(): Promise<Task[]> {
    return this.taskList;
  }

  async agreement(): Promise<AgreementStats> {
    return this.stats;
  }

  submit(submission: Submission): Promise<SubmitAck> {
    this.submissions.push(submission);
    const ack: SubmitAck = { ok: true, record: { ...submission, timestamp: 1 } };
    switch (this.submitMode.kind) {
      case "ack":
        return Promise.resolve(ack);
      case "manual":
        return new Promise((resolve) => this.pending.push(resolve));
      case "reject":
        return Promise.reject(new ApiError(this.submitMode.rule, this.submitMode.detail));
      case "network":
        return Promise.reject(new NetworkError("connection refused"));
    }
  }

  /** resolve the oldest in-flight manual submission */
  acknowledgeNext(): void {
    const resolve = this.pending.shift();
    if (!resolve) {
      throw new Error("no pending submission to acknowledge");
    }
    const last = this.submissions[this.submissions.length - 1];
    if (!last) {
      throw new Error("no submission recorded");
    }
    resolve({ ok: true, record: { ...last, timestamp: 1 } });
  }
}

export function flush(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}
