/** The fourteen-dimension edit form. The form never tracks a dirty flag:
 * whether a submission is AcceptUnmodified or Modify is decided by deep-
 * comparing the read-back record against the snapshot taken at render time,
 * so an edit that is typed and then reverted still submits AcceptUnmodified. */

import {
  cloneRecord,
  formatEvents,
  parseEvents,
  RecordDoc,
  TEXT_DIMENSIONS,
} from "./records.js";

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

export class DimensionForm {
  readonly root: HTMLElement;
  private readonly original: RecordDoc;
  private readonly inputs = new Map<string, HTMLInputElement | HTMLTextAreaElement>();
  private readonly errors = new Map<string, HTMLElement>();

  constructor(record: RecordDoc) {
    this.original = cloneRecord(record);
    this.root = el("div", "dimension-form");

    const transcript = el("div", "field field-readonly");
    transcript.append(
      el("label", undefined, "Transcript"),
      el("div", "value", record.transcript),
    );
    this.root.append(transcript);

    for (const [code, field, label] of TEXT_DIMENSIONS) {
      this.addField(field, `${label} (${code})`, record[field], "input");
    }
    this.addField(
      "paralinguistic_events",
      "Paralinguistic events (PE)",
      formatEvents(record.paralinguistic_events),
      "input",
      "Category@word-index, comma separated; empty for none",
    );
    this.addField(
      "transcript_tagged",
      "Tagged transcript (TPT)",
      record.transcript_tagged,
      "textarea",
    );
  }

  private addField(
    field: string,
    label: string,
    value: string,
    kind: "input" | "textarea",
    placeholder?: string,
  ): void {
    const wrap = el("div", "field");
    wrap.dataset.field = field;
    const input = kind === "input" ? el("input") : el("textarea");
    if (input instanceof HTMLInputElement) input.type = "text";
    input.value = value;
    input.name = field;
    if (placeholder) input.placeholder = placeholder;
    const error = el("span", "field-error");
    error.hidden = true;
    wrap.append(el("label", undefined, label), input, error);
    this.root.append(wrap);
    this.inputs.set(field, input);
    this.errors.set(field, error);
  }

  /** Current form state as a full record document; untouched fields keep the
   * original values verbatim. Throws on an unparseable event list. */
  read(): RecordDoc {
    const doc = cloneRecord(this.original);
    for (const [field, input] of this.inputs) {
      if (field === "paralinguistic_events") {
        doc.paralinguistic_events = parseEvents(input.value);
      } else {
        (doc as unknown as Record<string, string>)[field] = input.value;
      }
    }
    return doc;
  }

  snapshot(): RecordDoc {
    return cloneRecord(this.original);
  }

  setValue(field: string, value: string): void {
    const input = this.inputs.get(field);
    if (!input) throw new Error(`no editable field ${field}`);
    input.value = value;
    input.dispatchEvent(new Event("input", { bubbles: true }));
  }

  setReadOnly(readOnly: boolean): void {
    for (const input of this.inputs.values()) {
      input.disabled = readOnly;
    }
  }

  clearIssues(): void {
    for (const error of this.errors.values()) {
      error.hidden = true;
      error.textContent = "";
    }
  }

  /** Render per-field validation messages; returns the fields that could not
   * be matched to an input (surfaced in the banner instead). Issue fields may
   * carry an index suffix like paralinguistic_events[0]. */
  showIssues(issues: { field: string; message: string }[]): string[] {
    this.clearIssues();
    const unmatched: string[] = [];
    for (const issue of issues) {
      const error =
        this.errors.get(issue.field) ??
        this.errors.get(issue.field.replace(/\[\d+\]$/, ""));
      if (error) {
        error.textContent = issue.message;
        error.hidden = false;
      } else {
        unmatched.push(`${issue.field}: ${issue.message}`);
      }
    }
    return unmatched;
  }
}
