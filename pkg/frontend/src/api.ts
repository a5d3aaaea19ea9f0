/**
 * Typed client for the annotation service API. The UI talks to the service
 * exclusively through this module; it never reads files or computes
 * statistics on its own.
 */

export interface Robot {
  id: string;
  display_name: string;
  prompt_description: string;
}

export interface Task {
  instance_id: string;
  robot_id: string;
  image_url: string;
  crop_url: string;
  scheme: string;
  task: string;
  already_rated: boolean;
}

export interface Submission {
  annotator_id: string;
  instance_id: string;
  robot_id: string;
  rating: number;
}

export interface SubmitAck {
  ok: boolean;
  record: Submission & { timestamp: number };
}

export interface PerKeyStd {
  instance_id: string;
  robot_id: string;
  std_dev: number;
}

export interface AgreementStats {
  bin_width: number;
  edges: number[];
  counts: number[];
  per_key: PerKeyStd[];
}

/** Validation rejection from the service (HTTP 422 with a named rule). */
export class ApiError extends Error {
  constructor(
    readonly rule: string,
    readonly detail: string,
  ) {
    super(`${rule}: ${detail}`);
    this.name = "ApiError";
  }
}

/** Transport-level failure (network down, 5xx); worth retrying. */
export class NetworkError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "NetworkError";
  }
}

export interface AnnotationApi {
  robots(): Promise<Robot[]>;
  tasks(annotator: string, robot: string): Promise<Task[]>;
  submit(submission: Submission): Promise<SubmitAck>;
  agreement(): Promise<AgreementStats>;
}

async function parseError(response: Response): Promise<never> {
  let rule = `http_${response.status}`;
  let detail = response.statusText;
  try {
    const body = await response.json();
    if (body && body.error) {
      rule = body.error.rule ?? rule;
      detail = body.error.detail ?? detail;
    }
  } catch {
    // non-JSON error body: keep the status fallback
  }
  if (response.status >= 500) {
    throw new NetworkError(`${rule}: ${detail}`);
  }
  throw new ApiError(rule, detail);
}

export class HttpApi implements AnnotationApi {
  constructor(private readonly base = "") {}

  private async get<T>(path: string): Promise<T> {
    let response: Response;
    try {
      response = await fetch(this.base + path);
    } catch (err) {
      throw new NetworkError(String(err));
    }
    if (!response.ok) {
      await parseError(response);
    }
    return (await response.json()) as T;
  }

  robots(): Promise<Robot[]> {
    return this.get("/api/robots");
  }

  tasks(annotator: string, robot: string): Promise<Task[]> {
    const query = new URLSearchParams({ annotator, robot });
    return this.get(`/api/tasks?${query}`);
  }

  async submit(submission: Submission): Promise<SubmitAck> {
    let response: Response;
    try {
      response = await fetch(`${this.base}/api/annotations`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(submission),
      });
    } catch (err) {
      throw new NetworkError(String(err));
    }
    if (!response.ok) {
      await parseError(response);
    }
    return (await response.json()) as SubmitAck;
  }

  agreement(): Promise<AgreementStats> {
    return this.get("/api/stats/agreement");
  }
}
