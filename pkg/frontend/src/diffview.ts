/** Adjudicator view: the original record and both reviewers' revisions side
 * by side, changed cells highlighted, plus an editable final-revision form. */

import type { ItemPayload, ReviewDoc } from "./api.js";
import { changedFields, formatEvents, RecordDoc, TEXT_DIMENSIONS } from "./records.js";

const DIFF_ROWS: readonly [string, string][] = [
  ...TEXT_DIMENSIONS.map(([code, field]) => [field, code] as [string, string]),
  ["paralinguistic_events", "PE"],
  ["transcript_tagged", "TPT"],
];

function cellText(record: RecordDoc, field: string): string {
  if (field === "paralinguistic_events") {
    return formatEvents(record.paralinguistic_events) || "(none)";
  }
  return String((record as unknown as Record<string, unknown>)[field]);
}

export function buildDiffTable(item: ItemPayload): HTMLTableElement {
  const revisions = item.reviews.filter(
    (review): review is ReviewDoc & { revision: RecordDoc } =>
      review.revision !== null,
  );
  const table = document.createElement("table");
  table.className = "diff";

  const head = table.createTHead().insertRow();
  head.append(document.createElement("th"));
  const originalHeader = document.createElement("th");
  originalHeader.textContent = "original";
  head.append(originalHeader);
  for (const review of revisions) {
    const th = document.createElement("th");
    th.textContent = review.reviewer_id;
    head.append(th);
  }

  const body = table.createTBody();
  for (const [field, code] of DIFF_ROWS) {
    const row = body.insertRow();
    row.dataset.field = field;
    const label = document.createElement("th");
    label.textContent = code;
    row.append(label);
    row.insertCell().textContent = cellText(item.record, field);
    for (const review of revisions) {
      const cell = row.insertCell();
      cell.textContent = cellText(review.revision, field);
      if (changedFields(item.record, review.revision).includes(field)) {
        cell.classList.add("changed");
      }
    }
  }
  return table;
}
