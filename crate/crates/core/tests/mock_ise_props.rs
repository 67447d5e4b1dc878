use std::collections::BTreeSet;

use chrono::{TimeZone, Utc};
use proptest::prelude::*;
use serpaudit_core::extract::Extractor;
use serpaudit_core::mock_ise::{
    compute_pagerank, render_serp, run_auction, AdCandidate, Creative, LinkStyle, RankedGraph,
    SlotRequest, WebGraph, WebPage,
};
use serpaudit_core::ExtractionRuleSet;

/// Solves (I - dM) x = (1 - d) by Gaussian elimination with partial pivoting.
fn pagerank_oracle(n: usize, edges: &[(usize, usize)], d: f64) -> Vec<f64> {
    let edges: BTreeSet<(usize, usize)> = edges.iter().copied().collect();
    let mut outdeg = vec![0usize; n];
    for &(s, _) in &edges {
        outdeg[s] += 1;
    }
    let mut a = vec![vec![0.0; n + 1]; n];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
        row[n] = 1.0 - d;
    }
    for &(s, t) in &edges {
        a[t][s] -= d / outdeg[s] as f64;
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for c in col..=n {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
    }
    (0..n).map(|i| a[i][n] / a[i][i]).collect()
}

fn graph(n: usize, edges: &[(usize, usize)]) -> WebGraph {
    let url = |i: usize| format!("https://p{i}.org/");
    WebGraph::new(
        (0..n)
            .map(|i| WebPage {
                url: url(i),
                title: format!("page {i}"),
                content: String::new(),
                author: None,
                links: edges.iter().filter(|e| e.0 == i).map(|e| url(e.1)).collect(),
            })
            .collect(),
    )
}

fn arb_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (1usize..25).prop_flat_map(|n| (Just(n), prop::collection::vec((0..n, 0..n), 0..n * 3)))
}

fn candidate(i: usize, bid: f64, quality: f64) -> AdCandidate {
    AdCandidate {
        advertiser_host: format!("advertiser{i}.com"),
        creative: Creative {
            title: format!("ad {i}"),
            content: String::new(),
            display_url: format!("advertiser{i}.com"),
        },
        landing_path: "/".into(),
        bid,
        quality,
        targeting: None,
        link: LinkStyle::Direct,
    }
}

fn arb_auction() -> impl Strategy<Value = (Vec<AdCandidate>, f64, f64, usize)> {
    (
        prop::collection::vec((0.01f64..20.0, 0.01f64..=1.0), 0..12),
        0.0f64..3.0,
        0.0f64..2.0,
        1usize..5,
    )
        .prop_map(|(bq, reserve, threshold, slots)| {
            let c = bq.iter().enumerate().map(|(i, &(b, q))| candidate(i, b, q)).collect();
            (c, reserve, threshold, slots)
        })
}

fn request(reserve: f64, threshold: f64, slots: usize) -> SlotRequest {
    SlotRequest {
        query: "q".into(),
        reserve_price: reserve,
        adrank_threshold: threshold,
        slot_count: slots,
        user_signals: BTreeSet::new(),
    }
}

/// Text drawn from awkward characters: markup, entities, controls, emoji, combining marks.
fn arb_text() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop_oneof![
            Just("<".to_string()),
            Just(">".to_string()),
            Just("&".to_string()),
            Just("&amp;".to_string()),
            Just("\"".to_string()),
            Just("'".to_string()),
            Just("\r\n".to_string()),
            Just("\t".to_string()),
            Just("\u{0}".to_string()),
            Just("\u{7}".to_string()),
            Just("😊".to_string()),
            Just("e\u{301}".to_string()),
            Just("\u{a0}".to_string()),
            Just("</div>".to_string()),
            Just("<!--".to_string()),
            "[a-zA-Z0-9 ]{1,8}",
        ],
        0..12,
    )
    .prop_map(|v| v.concat())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn gsp_price_between_reserve_and_bid((cands, reserve, threshold, slots) in arb_auction()) {
        let wins = run_auction(&request(reserve, threshold, slots), &cands);
        prop_assert!(wins.len() <= slots);
        for (i, w) in wins.iter().enumerate() {
            let c = &cands[w.candidate];
            prop_assert_eq!(w.position, i + 1);
            prop_assert!(w.price >= reserve && w.price <= c.bid, "{} not in [{}, {}]", w.price, reserve, c.bid);
            prop_assert!(c.ad_rank() >= threshold && c.bid > reserve);
        }
        for pair in wins.windows(2) {
            prop_assert!(pair[0].ad_rank >= pair[1].ad_rank);
        }
    }

    #[test]
    fn gsp_order_invariant_under_scaling((cands, reserve, threshold, slots) in arb_auction(), c in prop::sample::select(vec![0.5, 2.0, 10.0])) {
        let base: Vec<usize> = run_auction(&request(reserve, threshold, slots), &cands).iter().map(|w| w.candidate).collect();
        let scaled_cands: Vec<AdCandidate> = cands.iter().cloned().map(|mut a| { a.bid *= c; a }).collect();
        let scaled: Vec<usize> = run_auction(&request(reserve * c, threshold * c, slots), &scaled_cands).iter().map(|w| w.candidate).collect();
        prop_assert_eq!(base, scaled);
    }

    #[test]
    fn pagerank_matches_linear_solve((n, edges) in arb_graph()) {
        let pr = compute_pagerank(&graph(n, &edges)).unwrap();
        let oracle = pagerank_oracle(n, &edges, 0.85);
        for (x, y) in pr.iter().zip(&oracle) {
            prop_assert!((x - y).abs() < 1e-8, "{} vs {}", x, y);
            prop_assert!(*x >= 0.15 - 1e-12);
        }
    }

    #[test]
    fn rendered_pages_extract_to_placed_content(
        texts in prop::collection::vec(arb_text(), 6),
        bids in prop::collection::vec(0.6f64..5.0, 0..4),
        seed in any::<u64>(),
    ) {
        let cands: Vec<AdCandidate> = bids.iter().enumerate().map(|(i, &b)| {
            let mut c = candidate(i, b, 0.9);
            c.creative.title = texts[0].clone();
            c.creative.content = texts[1].clone();
            c.creative.display_url = format!("{}advertiser{i}.com", texts[2]);
            c.link = [LinkStyle::Direct, LinkStyle::Relay, LinkStyle::Obfuscated][i % 3];
            c
        }).collect();
        let pages = vec![
            WebPage { url: "https://a.org/x?y=1&z=2".into(), title: format!("stem {}", texts[3]), content: texts[4].clone(), author: None, links: vec![] },
            WebPage { url: "https://news.org/".into(), title: format!("cells {}", texts[5]), content: String::new(), author: Some(texts[0].clone()), links: vec!["https://a.org/x?y=1&z=2".into()] },
        ];
        let ranked = RankedGraph::new(WebGraph::new(pages)).unwrap();
        let r = render_serp("stem cells", &request(0.5, 0.0, 3), &cands, &ranked, seed);
        let at = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
        let snap = Extractor::new(ExtractionRuleSet::bundled()).unwrap()
            .extract_snapshot(&r.page, "stem cells", "com", at, false).unwrap();
        prop_assert_eq!(&snap.results, &r.placed.results);
        prop_assert_eq!(&snap.top_stories, &r.placed.top_stories);
        // ads whose name and url both vanish are not ads; ours always carry a url
        prop_assert_eq!(&snap.ads, &r.placed.ads);
    }
}

#[test]
fn oracle_sanity() {
    let o = pagerank_oracle(2, &[(0, 1), (1, 0)], 0.85);
    assert!((o[0] - 1.0).abs() < 1e-12 && (o[1] - 1.0).abs() < 1e-12);
    assert_eq!(pagerank_oracle(1, &[], 0.85), vec![1.0 - 0.85]);
}
