/** Session controller: fetch queue items, render the edit form or the
 * adjudication diff, and map form state onto review submissions.
 *
 * Two rules the rest of the file serves:
 *   - a submission always carries the version the item was fetched at; a
 *     stale submit surfaces the server's VersionConflict, warns, and
 *     refetches (the server is the only arbiter);
 *   - the verdict is derived from a field diff at submit time, so an
 *     untouched form always becomes AcceptUnmodified, never Modify. */

import { ApiError, ItemPayload, ReviewApi } from "./api.js";
import { buildDiffTable } from "./diffview.js";
import { DimensionForm } from "./form.js";
import { recordsEqual } from "./records.js";

export type Role = "Expert" | "Adjudicator";

export interface Session {
  reviewerId: string;
  role: Role;
}

const OPEN_STATES = new Set(["Pending", "OneReviewed"]);

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export class ReviewApp {
  readonly root: HTMLElement;
  readonly api: ReviewApi;
  readonly session: Session;
  current: ItemPayload | null = null;
  form: DimensionForm | null = null;
  finalForm: DimensionForm | null = null;

  private banner: HTMLElement;
  private audio: HTMLAudioElement | null = null;
  private chain: Promise<void> = Promise.resolve();
  private keyHandler = (event: KeyboardEvent) => this.onKey(event);

  constructor(root: HTMLElement, api: ReviewApi, session: Session) {
    this.root = root;
    this.api = api;
    this.session = session;
    this.banner = el("div", "banner");
    this.banner.hidden = true;
  }

  /** Serialize UI-triggered actions and let tests await the tail. */
  private enqueue(action: () => Promise<void>): void {
    this.chain = this.chain.then(action).catch((err: unknown) => {
      this.showBanner("error", err instanceof Error ? err.message : String(err));
    });
  }

  idle(): Promise<void> {
    return this.chain;
  }

  async start(): Promise<void> {
    this.root.ownerDocument.addEventListener("keydown", this.keyHandler);
    await this.loadNext();
  }

  stop(): void {
    this.root.ownerDocument.removeEventListener("keydown", this.keyHandler);
  }

  async loadNext(): Promise<void> {
    const queue = await this.api.queue(this.session.reviewerId);
    const pending =
      this.session.role === "Adjudicator" ? queue.adjudicate : queue.review;
    if (pending.length === 0) {
      this.renderEmpty();
      return;
    }
    this.renderItem(pending[0]!);
  }

  /** Deep link to one item (?item=...); the queue flow is loadNext. */
  async loadItem(itemId: string): Promise<void> {
    const item = await this.api.item(itemId, this.session.reviewerId);
    this.renderItem(item);
  }

  /** Refetch the current item (e.g. after a version conflict), preserving
   * whatever banner is showing. */
  async refresh(): Promise<void> {
    if (!this.current) return;
    const item = await this.api.item(this.current.item_id, this.session.reviewerId);
    this.renderItem(item, { keepBanner: true });
  }

  // ── rendering ──────────────────────────────────────────────────────────────

  private resetRoot(item: ItemPayload | null, keepBanner: boolean): void {
    const bannerText = this.banner.textContent;
    const bannerKind = this.banner.dataset.kind;
    const bannerHidden = this.banner.hidden;
    this.root.replaceChildren();
    this.banner = el("div", "banner");
    this.banner.hidden = !keepBanner || bannerHidden;
    if (keepBanner && bannerText) {
      this.banner.textContent = bannerText;
      if (bannerKind) this.banner.dataset.kind = bannerKind;
    }
    this.root.append(this.banner);
    this.current = item;
    this.form = null;
    this.finalForm = null;
    this.audio = null;
    if (item) {
      this.root.dataset.itemId = item.item_id;
      this.root.dataset.state = item.state;
      this.root.dataset.version = String(item.version);
    } else {
      delete this.root.dataset.itemId;
      delete this.root.dataset.state;
      delete this.root.dataset.version;
    }
  }

  renderEmpty(): void {
    this.resetRoot(null, false);
    this.root.append(
      el("div", "empty", `queue empty for ${this.session.reviewerId}`),
    );
  }

  renderItem(item: ItemPayload, opts: { keepBanner?: boolean } = {}): void {
    this.resetRoot(item, opts.keepBanner ?? false);

    const header = el("header", "item-header");
    header.append(
      el("span", "item-id", item.item_id),
      el("span", "state-chip", item.state),
      el("span", "version", `v${item.version}`),
    );
    if (item.hidden_reviews > 0) {
      header.append(
        el(
          "span",
          "hidden-note",
          `${item.hidden_reviews} review(s) hidden until both are in`,
        ),
      );
    }
    this.root.append(header);

    this.audio = document.createElement("audio");
    this.audio.controls = true;
    this.audio.preload = "none";
    this.audio.src = this.api.audioUrl(item);
    this.root.append(this.audio);

    if (this.session.role === "Adjudicator") {
      this.renderAdjudicator(item);
    } else {
      this.renderExpert(item);
    }
  }

  private renderExpert(item: ItemPayload): void {
    this.form = new DimensionForm(item.record);
    this.root.append(this.form.root);

    const alreadyMine = item.reviews.some(
      (review) => review.reviewer_id === this.session.reviewerId,
    );
    const open = OPEN_STATES.has(item.state) && !alreadyMine;
    if (!open) {
      this.form.setReadOnly(true);
      this.root.append(
        el(
          "div",
          "closed-note",
          alreadyMine && OPEN_STATES.has(item.state)
            ? "you have reviewed this item; awaiting the second reviewer"
            : `reviews are closed (${item.state})`,
        ),
      );
      this.appendFooter([["skip", "Next (n)"]]);
      return;
    }
    this.appendFooter([
      ["submit", "Submit review (a)"],
      ["discard", "Discard (d)"],
      ["skip", "Skip (n)"],
    ]);
  }

  private renderAdjudicator(item: ItemPayload): void {
    if (item.state !== "Adjudication") {
      this.root.append(
        el("div", "closed-note", `nothing to adjudicate (${item.state})`),
      );
      this.appendFooter([["skip", "Next (n)"]]);
      return;
    }
    this.root.append(buildDiffTable(item));
    const caption = el(
      "div",
      "final-caption",
      "final revision (retained verbatim if consistent)",
    );
    this.finalForm = new DimensionForm(item.record);
    this.root.append(caption, this.finalForm.root);
    this.appendFooter([
      ["retain", "Consistent — retain final (a)"],
      ["inconsistent", "Inconsistent — discard (d)"],
      ["skip", "Skip (n)"],
    ]);
  }

  private appendFooter(actions: [string, string][]): void {
    const footer = el("footer", "actions");
    for (const [action, label] of actions) {
      const button = el("button", undefined, label);
      button.type = "button";
      button.dataset.action = action;
      button.addEventListener("click", () => this.trigger(action));
      footer.append(button);
    }
    this.root.append(footer);
  }

  // ── actions ────────────────────────────────────────────────────────────────

  private trigger(action: string): void {
    switch (action) {
      case "submit":
        this.enqueue(() => this.submitReview());
        break;
      case "discard":
        this.enqueue(() => this.submitDiscard());
        break;
      case "retain":
        this.enqueue(() => this.submitAdjudication(true));
        break;
      case "inconsistent":
        this.enqueue(() => this.submitAdjudication(false));
        break;
      case "skip":
        this.enqueue(() => this.loadNext());
        break;
      default:
        break;
    }
  }

  private onKey(event: KeyboardEvent): void {
    const target = event.target as HTMLElement | null;
    if (target && target.closest("input, textarea, select")) return;
    const byKey: Record<string, string> = {
      a: this.session.role === "Adjudicator" ? "retain" : "submit",
      d: this.session.role === "Adjudicator" ? "inconsistent" : "discard",
      n: "skip",
    };
    if (event.key === "p") {
      this.togglePlayback();
      return;
    }
    const action = byKey[event.key];
    if (action) {
      event.preventDefault();
      this.trigger(action);
    }
  }

  private togglePlayback(): void {
    if (!this.audio) return;
    try {
      if (this.audio.paused) void this.audio.play();
      else this.audio.pause();
    } catch {
      // environments without media support (tests) land here; nothing to do
    }
  }

  /** Expert submission: the verdict is the form diff, never a user claim. */
  async submitReview(): Promise<void> {
    if (!this.current || !this.form) return;
    this.form.clearIssues();
    let edited;
    try {
      edited = this.form.read();
    } catch (err) {
      this.form.showIssues([
        {
          field: "paralinguistic_events",
          message: err instanceof Error ? err.message : String(err),
        },
      ]);
      return;
    }
    const touched = !recordsEqual(edited, this.form.snapshot());
    try {
      await this.api.submitReview(this.current.item_id, {
        reviewer_id: this.session.reviewerId,
        verdict: touched ? "Modify" : "AcceptUnmodified",
        revision: touched ? edited : null,
        expected_version: this.current.version,
      });
      this.clearBanner();
      await this.loadNext();
    } catch (err) {
      await this.handleError(err);
    }
  }

  async submitDiscard(): Promise<void> {
    if (!this.current) return;
    try {
      await this.api.submitReview(this.current.item_id, {
        reviewer_id: this.session.reviewerId,
        verdict: "Discard",
        revision: null,
        expected_version: this.current.version,
      });
      this.clearBanner();
      await this.loadNext();
    } catch (err) {
      await this.handleError(err);
    }
  }

  async submitAdjudication(consistent: boolean): Promise<void> {
    if (!this.current || !this.finalForm) return;
    this.finalForm.clearIssues();
    let final = null;
    if (consistent) {
      try {
        final = this.finalForm.read();
      } catch (err) {
        this.finalForm.showIssues([
          {
            field: "paralinguistic_events",
            message: err instanceof Error ? err.message : String(err),
          },
        ]);
        return;
      }
    }
    try {
      await this.api.submitAdjudication(this.current.item_id, {
        adjudicator_id: this.session.reviewerId,
        consistent,
        final_revision: final,
        expected_version: this.current.version,
      });
      this.clearBanner();
      await this.loadNext();
    } catch (err) {
      await this.handleError(err);
    }
  }

  // ── error surface ──────────────────────────────────────────────────────────

  private showBanner(kind: "warn" | "error", text: string): void {
    this.banner.dataset.kind = kind;
    this.banner.textContent = text;
    this.banner.hidden = false;
  }

  private clearBanner(): void {
    this.banner.hidden = true;
    this.banner.textContent = "";
  }

  private async handleError(err: unknown): Promise<void> {
    if (!(err instanceof ApiError)) throw err;
    switch (err.name) {
      case "VersionConflict": {
        const now =
          err.currentVersion === null ? "" : ` (now version ${err.currentVersion})`;
        this.showBanner(
          "warn",
          `the item changed on the server${now}; the form was reloaded — re-apply your edits`,
        );
        await this.refresh();
        return;
      }
      case "InvalidState":
        this.showBanner("warn", err.detail);
        await this.refresh();
        return;
      case "DuplicateReviewer":
        this.showBanner("warn", err.detail);
        await this.loadNext();
        return;
      case "ValidationError": {
        const target = this.finalForm ?? this.form;
        const unmatched = target ? target.showIssues(err.issues) : [];
        this.showBanner(
          "error",
          unmatched.length > 0
            ? `validation failed: ${unmatched.join("; ")}`
            : "validation failed; see the highlighted fields",
        );
        return;
      }
      default:
        this.showBanner("error", `${err.name}: ${err.detail}`);
        return;
    }
  }
}
