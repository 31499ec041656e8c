mod common;

use common::*;
use reqwest::StatusCode;
use rulemesh_core::engine::{RunReport, Verdict};
use rulemesh_core::{Code, DialectId, Fact};
use rulemesh_server::api::*;
use rulemesh_server::client::EngineClient;
use rulemesh_server::error::ErrorBody;
use serde_json::json;

async fn demo(dialect: DialectId, decls: &str) -> (EngineServer, EngineClient) {
    let e = engine(dialect, "t").await;
    let c = EngineClient::from_base(&e.server.url);
    let spec = KnowledgeSetSpec::Full { name: "demo".into(), declarations: decls.into() };
    assert!(c.put_knowledge_sets(vec![spec]).await.unwrap()[0].is_ok());
    (e, c)
}

#[tokio::test]
async fn adult_scenario_over_http() {
    let (_e, c) = demo(DialectId::DrlMini, DRL_DECLS).await;
    let v = c.put_rules("demo", vec![DRL_ADULT.into()]).await.unwrap();
    assert!(v[0].is_valid(), "{v:?}");
    let facts = vec![
        Fact::new("Person", [("name", rulemesh_core::Value::from("ann")), ("age", 20.into())]),
        Fact::new("Person", [("name", rulemesh_core::Value::from("bob")), ("age", 15.into())]),
    ];
    let r = c.put_facts("demo", facts).await.unwrap();
    assert!(r.iter().all(|x| x.changed == Some(true)));
    let report = c.run("demo", None).await.unwrap();
    assert_eq!(report.firings, 1);
    assert_eq!(report.new_facts, vec![Fact::new("Adult", [("name", "ann")])]);
    assert_eq!(c.run("demo", None).await.unwrap().firings, 0);
    let rules = c.rules("demo", Some("adu")).await.unwrap();
    assert_eq!(rules, vec![RuleEntry { name: "adult".into(), text: DRL_ADULT.into() }]);
    assert!(c.rules("demo", Some("xyz")).await.unwrap().is_empty());
    let facts = c.facts("demo").await.unwrap();
    assert!(facts.windows(2).all(|w| w[0] < w[1]));
}

#[tokio::test]
async fn management_operations() {
    let e = engine(DialectId::ClipsMini, "jess.middleware").await;
    let c = EngineClient::from_base(&e.server.url);
    let p = c.properties().await.unwrap();
    assert_eq!((p.knowledge_set_count, p.dialect, p.title.as_str()), (0, DialectId::ClipsMini, "jess.middleware"));
    assert_eq!(c.ping().await.unwrap().engine_id, p.engine_id);
    let r = c
        .put_knowledge_sets(vec![KnowledgeSetSpec::Name("b".into()), KnowledgeSetSpec::Name("a".into())])
        .await
        .unwrap();
    assert!(r.iter().all(ItemResult::is_ok));
    assert_eq!(c.knowledge_sets().await.unwrap(), ["a", "b"]);
    assert_eq!(c.properties().await.unwrap().knowledge_set_count, 2);

    let r = c
        .put_knowledge_sets(vec![
            KnowledgeSetSpec::Name("a".into()),
            KnowledgeSetSpec::Full { name: "c".into(), declarations: "(deftemplate P (slot x (type FLOAT)))".into() },
            KnowledgeSetSpec::Name("d".into()),
        ])
        .await
        .unwrap();
    let codes: Vec<Option<Code>> = r.iter().map(|x| x.error.as_ref().map(|d| d.code)).collect();
    assert_eq!(codes, [Some(Code::EExists), Some(Code::EGrammar), None]);

    let r = c.delete_knowledge_sets(vec!["a".into(), "zz".into()]).await.unwrap();
    assert!(r[0].is_ok());
    assert_eq!(r[1].error.as_ref().unwrap().code, Code::ENotFound);
    assert_eq!(c.knowledge_sets().await.unwrap(), ["b", "d"]);
}

#[tokio::test]
async fn rule_batches_are_isolated() {
    let (_e, c) = demo(DialectId::ClipsMini, CLIPS_DECLS).await;
    let v = c.put_rules("demo", vec![CLIPS_ADULT.into(), "(defrule broken (Person".into(), CLIPS_ADULT.into()]).await.unwrap();
    let status: Vec<bool> = v.iter().map(Verdict::is_valid).collect();
    assert_eq!(status, [true, false, false]);
    assert_eq!(v[1].diagnostics[0].code, Code::EGrammar);
    assert_eq!(v[2].diagnostics[0].code, Code::EDuplicateRule);
    assert_eq!(c.rules("demo", None).await.unwrap().len(), 1);

    let v = c.validate_rules("demo", vec![CLIPS_NOT.into()]).await.unwrap();
    assert_eq!(v[0].diagnostics[0].code, Code::EUnsupported);

    let r = c.delete_rules("demo", vec!["adult".into(), "adult".into()]).await.unwrap();
    assert!(r[0].is_ok());
    assert_eq!(r[1].error.as_ref().unwrap().code, Code::ENotFound);
    assert!(c.rules("demo", None).await.unwrap().is_empty());
}

#[tokio::test]
async fn validate_does_not_change_state() {
    let (e, c) = demo(DialectId::DrlMini, DRL_DECLS).await;
    c.put_rules("demo", vec![DRL_ADULT.into()]).await.unwrap();
    let before = e.service.engine.with("demo", |k| k.snapshot()).unwrap();
    let texts = vec![
        DRL_ADULT.replace("adult", "other"),
        "rule \"g\" when Ghost(a : $x) then insert Adult(name: $x); end".into(),
        "rule \"broken\" when".into(),
    ];
    let v = c.validate_rules("demo", texts).await.unwrap();
    let codes: Vec<Option<Code>> = v.iter().map(|x| x.diagnostics.first().map(|d| d.code)).collect();
    assert_eq!(codes, [None, Some(Code::EUnknownType), Some(Code::EGrammar)]);
    assert_eq!(e.service.engine.with("demo", |k| k.snapshot()).unwrap(), before);
}

#[tokio::test]
async fn client_faults_get_structured_4xx() {
    let (e, _c) = demo(DialectId::DrlMini, DRL_DECLS).await;
    let base = &e.server.url;
    let h = http();
    let cases: Vec<(reqwest::Method, String, Option<String>, StatusCode)> = vec![
        (reqwest::Method::PUT, "/management/knowledge-sets".into(), Some("{".into()), StatusCode::BAD_REQUEST),
        (reqwest::Method::PUT, "/management/knowledge-sets".into(), Some("[1,2]".into()), StatusCode::BAD_REQUEST),
        (reqwest::Method::GET, "/functional/nope/rules".into(), None, StatusCode::NOT_FOUND),
        (reqwest::Method::PUT, "/functional/nope/rules".into(), Some(json!({"rules": []}).to_string()), StatusCode::NOT_FOUND),
        (reqwest::Method::PUT, "/functional/demo/rules".into(), Some(json!({"rules": "x"}).to_string()), StatusCode::BAD_REQUEST),
        (reqwest::Method::PUT, "/functional/demo/facts".into(), Some(json!({"facts": [{"type": "Person", "values": {"age": 1.5}}]}).to_string()), StatusCode::BAD_REQUEST),
        (reqwest::Method::POST, "/functional/demo/run".into(), Some("nope".into()), StatusCode::BAD_REQUEST),
        (reqwest::Method::POST, "/functional/nope/run".into(), None, StatusCode::NOT_FOUND),
        (reqwest::Method::PATCH, "/functional/demo/rules".into(), None, StatusCode::METHOD_NOT_ALLOWED),
        (reqwest::Method::GET, "/elsewhere".into(), None, StatusCode::NOT_FOUND),
    ];
    for (method, path, body, want) in cases {
        let mut req = h.request(method.clone(), format!("{base}{path}"));
        if let Some(b) = body {
            req = req.header("content-type", "application/json").body(b);
        }
        let resp = req.send().await.unwrap();
        assert_eq!(resp.status(), want, "{method} {path}");
        let body: ErrorBody = resp.json().await.unwrap();
        assert!(!body.diagnostic.detail.is_empty());
    }
}

#[tokio::test]
async fn per_fact_errors_do_not_fail_the_batch() {
    let (e, c) = demo(DialectId::DrlMini, DRL_DECLS).await;
    let body = json!({"facts": [
        {"type": "Person", "values": {"name": "ann", "age": "old"}},
        {"type": "Ghost", "values": {}},
        {"type": "Adult", "values": {"name": "ann"}},
        {"type": "Adult", "values": {"name": "ann"}}
    ]});
    let url = format!("{}/functional/demo/facts", e.server.url);
    let r: Vec<FactResult> = http().put(&url).json(&body).send().await.unwrap().json().await.unwrap();
    let codes: Vec<Option<Code>> = r.iter().map(|x| x.error.as_ref().map(|d| d.code)).collect();
    assert_eq!(codes, [Some(Code::EKindMismatch), Some(Code::EUnknownType), None, None]);
    assert_eq!((r[2].changed, r[3].changed), (Some(true), Some(false)));
    let removed = c.delete_facts("demo", vec![Fact::new("Adult", [("name", "ann")])]).await.unwrap();
    assert_eq!(removed[0].changed, Some(true));
    let report: RunReport = c.run("demo", Some(5)).await.unwrap();
    assert_eq!(report.firings, 0);
}
