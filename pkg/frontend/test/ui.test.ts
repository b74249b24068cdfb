import { describe, expect, it } from "vitest";

import { escapeHtml, renderAttention, renderCandidateTable, renderError, renderTurn } from "../src/ui.js";
import { systemTurn, userTurn } from "../src/view.js";

function barWidths(html: string): number[] {
  return [...html.matchAll(/width:([\d.]+)%/g)].map((m) => Number(m[1]));
}

describe("renderTurn", () => {
  it("shows badge and confidence on system turns only", () => {
    const sys = renderTurn(systemTurn({ response: "ok", source: "mhred", confidence: 0.42 }));
    expect(sys).toContain("badge-mhred");
    expect(sys).toContain("42.0%");
    expect(sys).toContain("turn-system");

    const usr = renderTurn(userTurn("hi there"));
    expect(usr).not.toContain("badge");
    expect(usr).toContain("turn-user");
    expect(usr).toContain("hi there");
  });

  it("escapes message text", () => {
    const html = renderTurn(userTurn("<script>alert(1)</script>"));
    expect(html).not.toContain("<script>");
    expect(html).toContain("&lt;script&gt;");
  });
});

describe("renderCandidateTable", () => {
  const candidates = [
    { text: "the lake is deep", source: "fr", confidence: 0.9, raw_score: 3.2 },
    { text: "i think so", source: "mhred", confidence: 0.6, raw_score: -1.1 },
    { text: "maybe", source: "mhred", confidence: 0.1, raw_score: -4.0 },
  ];

  it("keeps rows in payload order", () => {
    const html = renderCandidateTable(candidates);
    const first = html.indexOf("the lake is deep");
    const second = html.indexOf("i think so");
    const third = html.indexOf("maybe");
    expect(first).toBeGreaterThan(-1);
    expect(first).toBeLessThan(second);
    expect(second).toBeLessThan(third);
  });

  it("renders a source badge and both scores per row", () => {
    const html = renderCandidateTable(candidates);
    expect(html).toContain("badge-fr");
    expect(html).toContain("badge-mhred");
    expect(html).toContain("90.0%");
    expect(html).toContain("3.200");
    expect(html).toContain("-1.100");
  });

  it("escapes candidate text", () => {
    const html = renderCandidateTable([
      { text: "<img src=x>", source: "fr", confidence: 0.5, raw_score: 0 },
    ]);
    expect(html).not.toContain("<img");
  });
});

describe("renderAttention", () => {
  const report = {
    subject: [
      { text: "lake baikal", weight: 0.6 },
      { text: "siberia", weight: 0.4 },
    ],
    description: [
      { text: "deepest lake", weight: 0.25 },
      { text: "fresh water", weight: 0.25 },
      { text: "rift valley", weight: 0.5 },
    ],
  };

  it("bar widths sum to 100 within each hop", () => {
    const html = renderAttention(report);
    const hops = html.split('<div class="hop">').slice(1);
    expect(hops).toHaveLength(2);
    for (const hop of hops) {
      const widths = barWidths(hop);
      expect(widths.length).toBeGreaterThan(0);
      expect(widths.reduce((a, b) => a + b, 0)).toBeCloseTo(100, 1);
    }
  });

  it("exposes the raw weight in the hover title", () => {
    const html = renderAttention(report);
    expect(html).toContain('title="weight 0.600000"');
    expect(html).toContain('title="weight 0.250000"');
  });

  it("labels both hops", () => {
    const html = renderAttention(report);
    expect(html).toContain("hop 1");
    expect(html).toContain("hop 2");
  });
});

describe("renderError", () => {
  it("wraps the message in a banner and escapes it", () => {
    const html = renderError('boom & <b>"quoted"</b>');
    expect(html).toContain("error-banner");
    expect(html).toContain("boom &amp; &lt;b&gt;&quot;quoted&quot;&lt;/b&gt;");
  });
});

describe("escapeHtml", () => {
  it("escapes the five specials and nothing else", () => {
    expect(escapeHtml(`&<>"'plain`)).toBe("&amp;&lt;&gt;&quot;&#39;plain");
  });
});
