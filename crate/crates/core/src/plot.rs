//! Static SVG charts of effects, surprisal differences and the quadrant scatter.

use std::fmt::Write;

use crate::corpus::Construction;
use crate::stats::{EffectEstimate, Measure, QuadrantReport, Region, Source, SurprisalDifference};

const PANEL_W: f64 = 300.0;
const PANEL_H: f64 = 220.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 5] = ["#222222", "#1b9e77", "#d95f02", "#7570b3", "#e7298a"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Canvas {
    body: String,
    width: f64,
    height: f64,
}

impl Canvas {
    fn new(width: f64, height: f64, title: &str) -> Self {
        let mut c = Canvas {
            body: String::new(),
            width,
            height,
        };
        c.text(width / 2.0, 20.0, title, "middle", 14.0);
        c
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, dash: bool) {
        let dash = if dash { r#" stroke-dasharray="4 3""# } else { "" };
        let _ = writeln!(
            self.body,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{stroke}"{dash}/>"#
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}"/>"#
        );
    }

    fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str) {
        let _ = writeln!(self.body, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r}" fill="{fill}"/>"#);
    }

    fn text(&mut self, x: f64, y: f64, s: &str, anchor: &str, size: f64) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}" font-size="{size}">{}</text>"#,
            escape(s)
        );
    }

    fn finish(self) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

/// Value range padded to include 0 and never empty.
fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// One panel per construction; bars per region and source with bootstrap whiskers.
pub fn effects_svg(effects: &[EffectEstimate]) -> String {
    let constructions: Vec<Construction> = Construction::CRITICAL
        .into_iter()
        .filter(|c| effects.iter().any(|e| e.construction == *c))
        .collect();
    let (lo, hi) = range(effects.iter().flat_map(|e| [e.ci_low, e.ci_high, e.effect_ms]));
    let width = MARGIN + constructions.len().max(1) as f64 * (PANEL_W + MARGIN);
    let mut c = Canvas::new(width, PANEL_H + 2.5 * MARGIN + 20.0, "Garden-path effect (ms): human vs predicted");
    let top = MARGIN;
    let y = |v: f64| top + PANEL_H * (hi - v) / (hi - lo);
    for (pi, con) in constructions.iter().enumerate() {
        let x0 = MARGIN + pi as f64 * (PANEL_W + MARGIN);
        c.text(x0 + PANEL_W / 2.0, top - 8.0, con.as_str(), "middle", 13.0);
        c.line(x0, y(0.0), x0 + PANEL_W, y(0.0), "#888888", false);
        c.line(x0, top, x0, top + PANEL_H, "#000000", false);
        c.text(x0 - 4.0, y(hi) + 10.0, &format!("{hi:.0}"), "end", 10.0);
        c.text(x0 - 4.0, y(lo), &format!("{lo:.0}"), "end", 10.0);
        let slot = PANEL_W / Region::ALL.len() as f64;
        let bar = slot * 0.8 / Source::ALL.len() as f64;
        for (ri, region) in Region::ALL.into_iter().enumerate() {
            let sx = x0 + ri as f64 * slot + slot * 0.1;
            c.text(x0 + (ri as f64 + 0.5) * slot, top + PANEL_H + 14.0, region.as_str(), "middle", 10.0);
            for (si, source) in Source::ALL.into_iter().enumerate() {
                let Some(e) = effects
                    .iter()
                    .find(|e| e.construction == *con && e.region == region && e.source == source)
                else {
                    continue;
                };
                let bx = sx + si as f64 * bar;
                let (a, b) = (y(e.effect_ms.max(0.0)), y(e.effect_ms.min(0.0)));
                c.rect(bx, a, bar * 0.9, (b - a).max(0.5), COLORS[si]);
                let mid = bx + bar * 0.45;
                c.line(mid, y(e.ci_low), mid, y(e.ci_high), "#000000", false);
            }
        }
    }
    for (si, source) in Source::ALL.into_iter().enumerate() {
        let lx = MARGIN + si as f64 * 110.0;
        let ly = top + PANEL_H + 40.0;
        c.rect(lx, ly - 9.0, 10.0, 10.0, COLORS[si]);
        c.text(lx + 14.0, ly, source.as_str(), "start", 11.0);
    }
    c.finish()
}

/// One panel per construction; per-seed ambiguous-minus-unambiguous surprisal
/// with item-bootstrap whiskers, lexical and syntactic side by side.
pub fn surprisal_differences_svg(per_seed: &[(u64, Vec<SurprisalDifference>)]) -> String {
    let all: Vec<&SurprisalDifference> = per_seed.iter().flat_map(|(_, d)| d).collect();
    let constructions: Vec<Construction> = Construction::CRITICAL
        .into_iter()
        .filter(|c| all.iter().any(|d| d.construction == *c))
        .collect();
    let (lo, hi) = range(all.iter().flat_map(|d| [d.ci_low, d.ci_high, d.difference]));
    let width = MARGIN + constructions.len().max(1) as f64 * (PANEL_W + MARGIN);
    let mut c = Canvas::new(width, PANEL_H + 2.5 * MARGIN + 20.0, "Surprisal difference (nats), ambiguous - unambiguous");
    let top = MARGIN;
    let y = |v: f64| top + PANEL_H * (hi - v) / (hi - lo);
    let measures = [Measure::Lexical, Measure::Syntactic];
    for (pi, con) in constructions.iter().enumerate() {
        let x0 = MARGIN + pi as f64 * (PANEL_W + MARGIN);
        c.text(x0 + PANEL_W / 2.0, top - 8.0, con.as_str(), "middle", 13.0);
        c.line(x0, y(0.0), x0 + PANEL_W, y(0.0), "#888888", false);
        c.line(x0, top, x0, top + PANEL_H, "#000000", false);
        c.text(x0 - 4.0, y(hi) + 10.0, &format!("{hi:.1}"), "end", 10.0);
        c.text(x0 - 4.0, y(lo), &format!("{lo:.1}"), "end", 10.0);
        let slot = PANEL_W / Region::ALL.len() as f64;
        let n = (measures.len() * per_seed.len()).max(1) as f64;
        for (ri, region) in Region::ALL.into_iter().enumerate() {
            c.text(x0 + (ri as f64 + 0.5) * slot, top + PANEL_H + 14.0, region.as_str(), "middle", 10.0);
            for (mi, m) in measures.into_iter().enumerate() {
                for (si, (_, diffs)) in per_seed.iter().enumerate() {
                    let Some(d) = diffs
                        .iter()
                        .find(|d| d.construction == *con && d.region == region && d.measure == m)
                    else {
                        continue;
                    };
                    let k = (mi * per_seed.len() + si) as f64;
                    let x = x0 + ri as f64 * slot + slot * (0.1 + 0.8 * (k + 0.5) / n);
                    c.line(x, y(d.ci_low), x, y(d.ci_high), COLORS[mi + 1], false);
                    c.circle(x, y(d.difference), 2.5, COLORS[mi + 1]);
                }
            }
        }
    }
    for (mi, m) in measures.into_iter().enumerate() {
        let lx = MARGIN + mi as f64 * 110.0;
        let ly = top + PANEL_H + 40.0;
        c.circle(lx + 5.0, ly - 4.0, 4.0, COLORS[mi + 1]);
        c.text(lx + 14.0, ly, m.as_str(), "start", 11.0);
    }
    c.finish()
}

/// Filler tokens in the lexical/syntactic surprisal plane with median lines;
/// exemplars are labelled.
pub fn scatter_svg(report: &QuadrantReport) -> String {
    let side = 360.0;
    let mut c = Canvas::new(side + 2.0 * MARGIN, side + 2.0 * MARGIN, "Filler tokens: lexical vs syntactic surprisal");
    let (xlo, xhi) = range(report.tokens.iter().map(|t| t.surp_lex));
    let (ylo, yhi) = range(report.tokens.iter().map(|t| t.surp_syn));
    let x = |v: f64| MARGIN + side * (v - xlo) / (xhi - xlo);
    let y = |v: f64| MARGIN + side * (yhi - v) / (yhi - ylo);
    c.line(MARGIN, MARGIN + side, MARGIN + side, MARGIN + side, "#000000", false);
    c.line(MARGIN, MARGIN, MARGIN, MARGIN + side, "#000000", false);
    if report.lex_median.is_finite() && report.syn_median.is_finite() {
        c.line(x(report.lex_median), MARGIN, x(report.lex_median), MARGIN + side, "#888888", true);
        c.line(MARGIN, y(report.syn_median), MARGIN + side, y(report.syn_median), "#888888", true);
    }
    for t in &report.tokens {
        c.circle(x(t.surp_lex), y(t.surp_syn), 1.8, if t.exemplar { COLORS[2] } else { "#4477aa" });
    }
    for t in report.tokens.iter().filter(|t| t.exemplar) {
        c.text(x(t.surp_lex) + 4.0, y(t.surp_syn) - 4.0, &t.token, "start", 10.0);
    }
    c.text(MARGIN + side / 2.0, MARGIN + side + 30.0, "lexical surprisal (nats)", "middle", 11.0);
    c.text(14.0, MARGIN + side / 2.0, "syntactic", "start", 11.0);
    c.text(MARGIN, MARGIN + side + 14.0, &format!("{xlo:.1}"), "middle", 10.0);
    c.text(MARGIN + side, MARGIN + side + 14.0, &format!("{xhi:.1}"), "middle", 10.0);
    c.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::Variant;

    fn effect(c: Construction, r: Region, s: Source, v: f64) -> EffectEstimate {
        EffectEstimate {
            construction: c,
            region: r,
            source: s,
            effect_ms: v,
            ci_low: v - 5.0,
            ci_high: v + 5.0,
            n_resamples: 1000,
        }
    }

    #[test]
    fn effects_plot_is_xml_naming_each_construction() {
        let mut es = Vec::new();
        for c in Construction::CRITICAL {
            for r in Region::ALL {
                es.push(effect(c, r, Source::Human, 40.0));
                es.push(effect(c, r, Source::Model(Variant::Both), -3.0));
            }
        }
        let svg = effects_svg(&es);
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let texts: Vec<&str> = doc.descendants().filter_map(|n| n.text()).collect();
        for c in Construction::CRITICAL {
            assert!(texts.contains(&c.as_str()), "{c}");
        }
    }

    #[test]
    fn tokens_are_escaped() {
        assert_eq!(escape("a<&>\"b"), "a&lt;&amp;&gt;&quot;b");
    }
}
