/** Stage-tree rendering: nested lists, optimal path marked, values verbatim.
 *
 * The renderer validates the document shape before touching the DOM; a
 * malformed document raises and the caller swaps in an error panel instead
 * of a half-drawn tree.
 */

import { TreeBranch, TreeDoc } from "./api.js";

export interface TreeOptions {
  /** Called with the branch label when a root decision branch is picked. */
  onPick?: (label: string) => void;
}

function fail(path: string, why: string): never {
  throw new Error(`malformed tree document: ${path} ${why}`);
}

function checkString(value: unknown, path: string): string {
  if (typeof value !== "string") fail(path, "is not a string");
  return value;
}

function checkBranch(raw: unknown, path: string): TreeBranch {
  if (raw === null || typeof raw !== "object") fail(path, "is not an object");
  const b = raw as Record<string, unknown>;
  const probability = b.probability === null ? null : checkString(b.probability, `${path}.probability`);
  if (typeof b.chosen !== "boolean") fail(`${path}.chosen`, "is not a boolean");
  return {
    label: checkString(b.label, `${path}.label`),
    probability,
    chosen: b.chosen,
    value: checkString(b.value, `${path}.value`),
    child: b.child === null || b.child === undefined ? null : checkTree(b.child, `${path}.child`),
  };
}

export function checkTree(raw: unknown, path = "tree"): TreeDoc {
  if (raw === null || typeof raw !== "object") fail(path, "is not an object");
  const doc = raw as Record<string, unknown>;
  if (!Array.isArray(doc.branches)) fail(`${path}.branches`, "is not an array");
  return {
    variable: checkString(doc.variable, `${path}.variable`),
    owner: checkString(doc.owner, `${path}.owner`),
    kind: checkString(doc.kind, `${path}.kind`),
    value: checkString(doc.value, `${path}.value`),
    branches: doc.branches.map((b, i) => checkBranch(b, `${path}.branches[${i}]`)),
  };
}

export function renderTree(raw: unknown, opts: TreeOptions = {}): HTMLElement {
  const doc = checkTree(raw);
  const root = document.createElement("div");
  root.className = "tree";
  root.appendChild(renderNode(doc, opts, true));
  return root;
}

function renderNode(doc: TreeDoc, opts: TreeOptions, isRoot: boolean): HTMLElement {
  const node = document.createElement("div");
  node.className = `tree-node kind-${doc.kind}`;

  const head = document.createElement("div");
  head.className = "tree-head";
  head.appendChild(span("tree-var", doc.variable));
  head.appendChild(span("tree-kind", ` [${doc.kind}, ${doc.owner}]`));
  head.appendChild(span("num tree-value", doc.value));
  node.appendChild(head);

  if (doc.branches.length === 0) return node;

  const list = document.createElement("ul");
  list.className = "tree-branches";
  for (const branch of doc.branches) {
    const item = document.createElement("li");
    item.className = branch.chosen ? "branch chosen" : "branch";

    const label = `${doc.variable}=${branch.label}`;
    if (isRoot && doc.kind === "decision" && opts.onPick) {
      const pick = document.createElement("button");
      pick.type = "button";
      pick.className = "pick";
      pick.dataset.label = branch.label;
      pick.textContent = label;
      const handler = opts.onPick;
      pick.addEventListener("click", () => handler(branch.label));
      item.appendChild(pick);
    } else {
      item.appendChild(span("branch-label", label));
    }
    if (branch.probability !== null) {
      item.appendChild(span("num branch-prob", ` p=${branch.probability}`));
    }
    item.appendChild(span("num branch-value", branch.value));
    if (branch.child !== null) {
      item.appendChild(renderNode(branch.child, opts, false));
    }
    list.appendChild(item);
  }
  node.appendChild(list);
  return node;
}

function span(className: string, text: string): HTMLElement {
  const out = document.createElement("span");
  out.className = className;
  out.textContent = text;
  return out;
}
