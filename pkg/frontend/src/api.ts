/** Typed client for the session service.
 *
 * Every numeric field arrives as a nine-significant-digit decimal string and
 * stays a string: the console displays service numbers, it never recomputes
 * them.
 */

export interface StageRow {
  stage: string;
  owner: string;
  status: string;
  state: string | null;
  outcome: string | null;
}

export interface SessionDoc {
  session: string;
  model: string;
  model_hash: string;
  bins: number;
  tie: { absolute: string; relative: string };
  seq: number;
  stages: StageRow[];
  evidence: Record<string, string>;
  next_stage: string | null;
  status?: string;
  defender_value?: string;
  attacker_value?: string;
  error?: string;
}

export interface RecommendationDoc {
  stage: string;
  owner: string;
  given: Record<string, string>;
  options: string[];
  expected: string[];
  maximizers: string[];
  choice: string;
  value: string;
  threshold: string;
}

export interface TreeBranch {
  label: string;
  probability: string | null;
  chosen: boolean;
  value: string;
  child: TreeDoc | null;
}

export interface TreeDoc {
  variable: string;
  owner: string;
  kind: string;
  value: string;
  branches: TreeBranch[];
}

export interface WhatIfDoc {
  assignments: Record<string, string>;
  defender_value: string;
  attacker_value: string;
  recommendation: RecommendationDoc | null;
}

export interface ModelRow {
  name: string;
  title?: string | null;
  model_hash?: string;
  variables?: number;
  stages?: { stage: string; owner: string }[];
  error?: string;
}

export type ObservationKind = "attack" | "consequence";

/** The slice of the service the console consumes; Client implements it. */
export type ServiceApi = Pick<
  Client,
  | "listModels"
  | "openSession"
  | "getSession"
  | "commit"
  | "observe"
  | "recommendation"
  | "tree"
  | "whatIf"
>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(detail);
    this.name = "ApiError";
  }
}

function detailText(body: unknown): string {
  if (body && typeof body === "object" && "detail" in body) {
    const detail = (body as { detail: unknown }).detail;
    return typeof detail === "string" ? detail : JSON.stringify(detail);
  }
  return JSON.stringify(body);
}

export class Client {
  constructor(
    readonly base: string,
    private readonly fetchFn: typeof fetch = (...args) => fetch(...args),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: { accept: "application/json" } };
    if (body !== undefined) {
      init.headers = { ...init.headers, "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const res = await this.fetchFn(`${this.base}${path}`, init);
    const text = await res.text();
    let parsed: unknown = null;
    try {
      parsed = text ? JSON.parse(text) : null;
    } catch {
      parsed = text;
    }
    if (!res.ok) {
      throw new ApiError(res.status, detailText(parsed));
    }
    return parsed as T;
  }

  listModels(): Promise<ModelRow[]> {
    return this.request("GET", "/models");
  }

  openSession(
    model: string,
    opts: { sessionId?: string; bins?: number; tieEps?: number } = {},
  ): Promise<SessionDoc> {
    return this.request("POST", "/sessions", {
      model,
      session_id: opts.sessionId ?? null,
      bins: opts.bins ?? null,
      tie_eps: opts.tieEps ?? null,
    });
  }

  getSession(id: string): Promise<SessionDoc> {
    return this.request("GET", `/sessions/${encodeURIComponent(id)}`);
  }

  commit(id: string, decision: string, state: string): Promise<SessionDoc> {
    return this.request("POST", `/sessions/${encodeURIComponent(id)}/commit`, {
      decision,
      state,
    });
  }

  observe(
    id: string,
    kind: ObservationKind,
    variable: string,
    state: string,
  ): Promise<SessionDoc> {
    return this.request("POST", `/sessions/${encodeURIComponent(id)}/observe`, {
      kind,
      variable,
      state,
    });
  }

  recommendation(id: string): Promise<RecommendationDoc> {
    return this.request("GET", `/sessions/${encodeURIComponent(id)}/recommendation`);
  }

  tree(id: string, stage?: string): Promise<TreeDoc> {
    const query = stage === undefined ? "" : `?stage=${encodeURIComponent(stage)}`;
    return this.request("GET", `/sessions/${encodeURIComponent(id)}/tree${query}`);
  }

  whatIf(id: string, assignments: Record<string, string>): Promise<WhatIfDoc> {
    return this.request("POST", `/sessions/${encodeURIComponent(id)}/whatif`, {
      assignments,
    });
  }
}
