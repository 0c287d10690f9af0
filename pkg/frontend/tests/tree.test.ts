import { describe, expect, it, vi } from "vitest";

import { renderTree } from "../src/tree.js";

const LEAF = { variable: "S", owner: "nature", kind: "chance", value: "-100", branches: [] };

const DEFEND_TREE = {
  variable: "D",
  owner: "defender",
  kind: "decision",
  value: "-100",
  branches: [
    {
      label: "Yes",
      probability: null,
      chosen: true,
      value: "-100",
      child: {
        variable: "A",
        owner: "attacker",
        kind: "chance",
        value: "-100",
        branches: [
          { label: "Yes", probability: "0.25", chosen: false, value: "-140", child: null },
          { label: "No", probability: "0.75", chosen: false, value: "-86.6666667", child: null },
        ],
      },
    },
    { label: "No", probability: null, chosen: false, value: "-160", child: null },
  ],
};

describe("stage tree rendering", () => {
  it("draws both branches and marks the optimal one", () => {
    const view = renderTree(DEFEND_TREE);
    const branches = Array.from(view.querySelector("ul.tree-branches")?.children ?? []);
    expect(branches).toHaveLength(2);
    expect(branches[0]?.classList.contains("chosen")).toBe(true);
    expect(branches[1]?.classList.contains("chosen")).toBe(false);
    expect(view.textContent).toContain("-100");
    expect(view.textContent).toContain("-160");
  });

  it("shows rolled-back values and probabilities verbatim", () => {
    const view = renderTree(DEFEND_TREE);
    const numbers = Array.from(view.querySelectorAll(".num")).map((n) => n.textContent);
    expect(numbers).toContain("-86.6666667");
    expect(numbers).toContain(" p=0.75");
  });

  it("makes root decision branches selectable", () => {
    const onPick = vi.fn();
    const view = renderTree(DEFEND_TREE, { onPick });
    const picks = view.querySelectorAll("button.pick");
    expect(picks).toHaveLength(2);
    (picks[1] as HTMLButtonElement).click();
    expect(onPick).toHaveBeenCalledWith("No");
    // nested chance branches are not clickable
    expect(view.querySelectorAll("ul ul button.pick")).toHaveLength(0);
  });

  it("renders a single-leaf tree as one node", () => {
    const view = renderTree(LEAF);
    expect(view.querySelectorAll(".tree-node")).toHaveLength(1);
    expect(view.querySelector("ul")).toBeNull();
  });

  it("rejects malformed documents before drawing", () => {
    expect(() => renderTree(null)).toThrowError(/malformed tree document/);
    expect(() => renderTree({ variable: "D" })).toThrowError(/malformed tree document/);
    expect(() =>
      renderTree({ ...DEFEND_TREE, branches: [{ label: 3, chosen: true }] }),
    ).toThrowError(/malformed tree document/);
    const numeric = {
      ...LEAF,
      value: -100, // a float where the contract says decimal string
    };
    expect(() => renderTree(numeric)).toThrowError(/value is not a string/);
  });
});
