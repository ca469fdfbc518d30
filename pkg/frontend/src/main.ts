/** Page bootstrap: session parameters come from the query string so a
 * reviewer bookmarks their own URL, e.g.
 *   index.html?api=http://127.0.0.1:8787&reviewer=r1&role=expert */

import { ReviewApi } from "./api.js";
import { ReviewApp, Role } from "./app.js";

function param(name: string, fallback: string): string {
  return new URLSearchParams(window.location.search).get(name) ?? fallback;
}

const root = document.getElementById("app");
if (root) {
  const role: Role =
    param("role", "expert").toLowerCase() === "adjudicator"
      ? "Adjudicator"
      : "Expert";
  const app = new ReviewApp(
    root,
    new ReviewApi(param("api", "")),
    { reviewerId: param("reviewer", "anonymous"), role },
  );
  const item = param("item", "");
  const boot = item ? app.start().then(() => app.loadItem(item)) : app.start();
  void boot.catch((err: unknown) => {
    root.textContent = `failed to load the review queue: ${
      err instanceof Error ? err.message : String(err)
    }`;
  });
}
