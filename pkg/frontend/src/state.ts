/** Session store: polling, transitions and what-if previews.
 *
 * The store owns one live session. After every mutation it refreshes from the
 * mutation response and keeps polling the session resource (1s by default)
 * until the background solve lands, then pulls the recommendation and the
 * stage tree. Polling continues while the store is live so external changes
 * to the session surface without a reload.
 */

import {
  ApiError,
  ObservationKind,
  RecommendationDoc,
  ServiceApi,
  SessionDoc,
  TreeDoc,
  WhatIfDoc,
} from "./api.js";

export type Phase = "idle" | "solving" | "ready" | "failed" | "done";

export interface Preview {
  assignments: Record<string, string>;
  result: WhatIfDoc;
}

export interface ViewState {
  phase: Phase;
  session: SessionDoc | null;
  recommendation: RecommendationDoc | null;
  tree: TreeDoc | null;
  previews: Preview[];
  error: string | null;
}

type Listener = (state: ViewState) => void;

const DEFAULT_INTERVAL_MS = 1000;

export class SessionStore {
  private state: ViewState = {
    phase: "idle",
    session: null,
    recommendation: null,
    tree: null,
    previews: [],
    error: null,
  };
  private listeners = new Set<Listener>();
  private timer: ReturnType<typeof setTimeout> | null = null;
  private stopped = false;
  private fetchedSeq = -1;
  private generation = 0;

  constructor(
    private readonly client: ServiceApi,
    private readonly intervalMs: number = DEFAULT_INTERVAL_MS,
  ) {}

  get view(): ViewState {
    return this.state;
  }

  subscribe(fn: Listener): () => void {
    this.listeners.add(fn);
    return () => this.listeners.delete(fn);
  }

  private emit(patch: Partial<ViewState>): void {
    this.state = { ...this.state, ...patch };
    for (const fn of this.listeners) fn(this.state);
  }

  /** Open a fresh session and start following it. */
  async open(model: string, opts: { bins?: number; tieEps?: number } = {}): Promise<void> {
    await this.begin(() => this.client.openSession(model, opts));
  }

  /** Attach to an existing session (picked up from its event log). */
  async attach(sessionId: string): Promise<void> {
    await this.begin(() => this.client.getSession(sessionId));
  }

  private async begin(fetchDoc: () => Promise<SessionDoc>): Promise<void> {
    this.stop();
    this.stopped = false;
    this.fetchedSeq = -1;
    try {
      const doc = await fetchDoc();
      this.emit({
        phase: phaseOf(doc),
        session: doc,
        recommendation: null,
        tree: null,
        previews: [],
        error: null,
      });
    } catch (exc) {
      this.emit({ phase: "idle", error: message(exc) });
      return;
    }
    await this.tick();
  }

  async commit(decision: string, state: string): Promise<void> {
    await this.mutate(() => this.client.commit(this.id(), decision, state));
  }

  async observe(kind: ObservationKind, variable: string, state: string): Promise<void> {
    await this.mutate(() => this.client.observe(this.id(), kind, variable, state));
  }

  /** Preview on a server-side clone; the live session does not move. */
  async whatIf(assignments: Record<string, string>): Promise<WhatIfDoc | null> {
    try {
      const result = await this.client.whatIf(this.id(), assignments);
      this.emit({
        previews: [...this.state.previews, { assignments, result }],
        error: null,
      });
      return result;
    } catch (exc) {
      this.emit({ error: message(exc) });
      return null;
    }
  }

  clearPreviews(): void {
    this.emit({ previews: [] });
  }

  stop(): void {
    this.stopped = true;
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
  }

  private id(): string {
    const doc = this.state.session;
    if (doc === null) throw new Error("no session open");
    return doc.session;
  }

  private async mutate(action: () => Promise<SessionDoc>): Promise<void> {
    try {
      const doc = await action();
      // mutation responses carry the new timeline before the re-solve lands
      this.emit({
        phase: "solving",
        session: doc,
        recommendation: null,
        tree: null,
        error: null,
      });
      this.fetchedSeq = -1;
      await this.tick();
    } catch (exc) {
      this.emit({ error: message(exc) });
    }
  }

  /** One poll step; reschedules itself until stop().
   *
   * The generation token retires in-flight steps: a new begin/mutate bumps it,
   * so a poll that was awaiting the network neither applies stale state nor
   * schedules a second loop.
   */
  private async tick(): Promise<void> {
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    if (this.stopped || this.state.session === null) return;
    const gen = ++this.generation;
    try {
      const doc = await this.client.getSession(this.state.session.session);
      if (gen !== this.generation) return;
      const phase = phaseOf(doc);
      this.emit({ phase, session: doc });
      if (phase === "ready" && doc.seq !== this.fetchedSeq) {
        const [recommendation, tree] = await Promise.all([
          this.client.recommendation(doc.session),
          this.client.tree(doc.session, doc.next_stage ?? undefined),
        ]);
        if (gen !== this.generation) return;
        this.emit({ recommendation, tree });
        this.fetchedSeq = doc.seq;
      }
    } catch (exc) {
      if (gen !== this.generation) return;
      this.emit({ error: message(exc) });
    }
    if (!this.stopped && gen === this.generation) {
      this.timer = setTimeout(() => void this.tick(), this.intervalMs);
    }
  }
}

function phaseOf(doc: SessionDoc): Phase {
  if (doc.status === "failed") return "failed";
  if (doc.status === "solving") return "solving";
  if (doc.next_stage === null) return "done";
  return "ready";
}

function message(exc: unknown): string {
  if (exc instanceof ApiError) return exc.message;
  return exc instanceof Error ? exc.message : String(exc);
}
