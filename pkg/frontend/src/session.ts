/**
 * Session state machine for the blinded A/B evaluation flow.
 *
 * The server is the source of truth: the controller never guesses which
 * item comes next, it always asks, so a page refresh resumes at the first
 * unanswered item. Submissions are serialized and never optimistic; the
 * view advances only after the service acknowledges the choice. A network
 * failure mid-submit queues the same payload for retry until it is
 * acknowledged (a 409 on retry means the first attempt actually landed).
 */

import { ApiClient, ApiError, Choice, NextItem, Ratings } from "./api.js";

export interface KeyValueStore {
  get(key: string): string | null;
  set(key: string, value: string): void;
  remove(key: string): void;
}

export interface SessionSummary {
  answered: number;
  leftChosen: number;
  rightChosen: number;
}

export type Phase = "idle" | "active" | "complete";

export interface SessionView {
  phase: Phase;
  sessionId: string | null;
  progress: { answered: number; total: number };
  current: NextItem | null;
  /** Service-unreachable banner text; retry() re-attempts the failed step. */
  banner: string | null;
  /** Inline validation message (evaluator label or ratings). */
  inlineError: string | null;
  submitting: boolean;
  /** The evaluator's own per-session summary, shown on completion. */
  summary: SessionSummary | null;
}

interface ControllerOptions {
  retryDelayMs?: number;
  maxSubmitAttempts?: number;
  sleep?: (ms: number) => Promise<void>;
}

const SESSION_KEY = "abeval.session";

function defaultSleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

export class SessionController {
  private phase: Phase = "idle";
  private sessionId: string | null = null;
  private current: NextItem | null = null;
  private progress = { answered: 0, total: 0 };
  private banner: string | null = null;
  private inlineError: string | null = null;
  private submitting = false;
  private summary: SessionSummary = { answered: 0, leftChosen: 0, rightChosen: 0 };
  private retryAction: (() => Promise<SessionView>) | null = null;

  private readonly retryDelayMs: number;
  private readonly maxSubmitAttempts: number;
  private readonly sleep: (ms: number) => Promise<void>;

  constructor(
    private readonly api: ApiClient,
    private readonly store: KeyValueStore,
    options: ControllerOptions = {},
  ) {
    this.retryDelayMs = options.retryDelayMs ?? 1500;
    this.maxSubmitAttempts = options.maxSubmitAttempts ?? 1000;
    this.sleep = options.sleep ?? defaultSleep;
  }

  view(): SessionView {
    return {
      phase: this.phase,
      sessionId: this.sessionId,
      progress: { ...this.progress },
      current: this.current,
      banner: this.banner,
      inlineError: this.inlineError,
      submitting: this.submitting,
      summary: this.phase === "complete" ? { ...this.summary } : null,
    };
  }

  /** Re-run whatever step last failed with a service banner. */
  async retry(): Promise<SessionView> {
    const action = this.retryAction;
    if (!action) return this.view();
    return action();
  }

  async startSession(evaluatorLabel: string): Promise<SessionView> {
    const label = evaluatorLabel.trim();
    this.inlineError = null;
    if (!label) {
      this.inlineError = "Please enter your name or label first.";
      return this.view();
    }
    try {
      const info = await this.api.createSession(label);
      this.banner = null;
      this.retryAction = null;
      this.sessionId = info.session_id;
      this.progress = { answered: 0, total: info.n_items };
      this.summary = { answered: 0, leftChosen: 0, rightChosen: 0 };
      this.persist();
      return this.fetchNext();
    } catch (err) {
      // Keep the label so retrying loses nothing the evaluator typed.
      this.banner = "Cannot reach the evaluation service. Check the connection and retry.";
      this.retryAction = () => this.startSession(label);
      return this.view();
    }
  }

  /** Resume a stored session after a refresh; null when none is stored. */
  async resume(): Promise<SessionView | null> {
    const stored = this.store.get(SESSION_KEY);
    if (!stored) return null;
    const parsed = JSON.parse(stored) as {
      sessionId: string;
      summary: SessionSummary;
    };
    this.sessionId = parsed.sessionId;
    this.summary = parsed.summary;
    return this.fetchNext();
  }

  private persist(): void {
    if (!this.sessionId) return;
    this.store.set(
      SESSION_KEY,
      JSON.stringify({ sessionId: this.sessionId, summary: this.summary }),
    );
  }

  private clearStored(): void {
    this.store.remove(SESSION_KEY);
  }

  private async fetchNext(): Promise<SessionView> {
    if (!this.sessionId) return this.view();
    try {
      const item = await this.api.nextItem(this.sessionId);
      this.banner = null;
      this.retryAction = null;
      if (item === null) {
        this.phase = "complete";
        this.current = null;
        this.clearStored();
      } else {
        this.phase = "active";
        this.current = item;
        this.progress = { answered: item.answered, total: item.total };
      }
      return this.view();
    } catch (err) {
      this.banner = "Cannot reach the evaluation service. Check the connection and retry.";
      this.retryAction = () => this.fetchNext();
      return this.view();
    }
  }

  /**
   * Submit the choice for the displayed item, then advance.
   *
   * Re-entrant calls while a submission is in flight are ignored, so a
   * double click produces exactly one record; if a duplicate does reach
   * the service it answers 409 and we simply skip forward.
   */
  async submitAndAdvance(choice: Choice, ratings?: Ratings): Promise<SessionView> {
    if (this.submitting || !this.sessionId || !this.current) {
      return this.view();
    }
    const item = this.current;
    if (ratings) {
      const bad = Object.values(ratings).some(
        (v) => !Number.isInteger(v) || v < 1 || v > 5,
      );
      const incomplete = item.dimensions.some((d) => !(d in ratings));
      if (bad || incomplete) {
        this.inlineError = "Ratings must cover every dimension with whole numbers 1-5.";
        return this.view();
      }
    }
    this.inlineError = null;
    this.submitting = true;
    try {
      let attempt = 0;
      for (;;) {
        attempt += 1;
        try {
          await this.api.submitChoice(this.sessionId, item.item_id, choice, ratings);
          this.recordOwnChoice(choice);
          break;
        } catch (err) {
          if (err instanceof ApiError && err.status === 409) {
            if (attempt > 1) {
              // The first attempt landed before the network hiccup ate
              // the acknowledgment; it was still our submission.
              this.recordOwnChoice(choice);
            }
            break; // already answered: skip forward
          }
          if (err instanceof ApiError && err.status === 422) {
            this.inlineError = "The service rejected the ratings; use whole numbers 1-5.";
            return this.view();
          }
          if (
            err instanceof ApiError &&
            err.isNetworkFailure &&
            attempt < this.maxSubmitAttempts
          ) {
            this.banner = "Connection lost; retrying your submission...";
            await this.sleep(this.retryDelayMs);
            continue;
          }
          this.banner = "Submission failed. Check the connection and retry.";
          this.retryAction = () => {
            this.submitting = false;
            return this.submitAndAdvance(choice, ratings);
          };
          return this.view();
        }
      }
      this.banner = null;
      this.persist();
      return await this.fetchNext();
    } finally {
      this.submitting = false;
    }
  }

  private recordOwnChoice(choice: Choice): void {
    this.summary.answered += 1;
    if (choice === "left") this.summary.leftChosen += 1;
    else this.summary.rightChosen += 1;
  }
}
