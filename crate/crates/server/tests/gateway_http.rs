mod common;

use common::*;
use reqwest::StatusCode;
use rulemesh_core::engine::Verdict;
use rulemesh_core::translate::{Status, TranslationReport};
use rulemesh_core::{ir, Code, DialectId};
use rulemesh_server::api::{ItemResult, KnowledgeSetSpec, RuleEntry};
use rulemesh_server::client::EngineClient;
use rulemesh_server::control::{ControlPlane, EngineHandle, EngineOutcome, Propagation};
use rulemesh_server::error::ErrorBody;
use rulemesh_server::gateway::Endpoint;
use serde_json::json;

struct Mesh {
    registry: Server,
    drl: EngineServer,
    clips: EngineServer,
    gateway: Server,
}

impl Mesh {
    async fn new() -> Mesh {
        let registry = registry(None).await;
        let drl = registered_engine(&registry.url, DialectId::DrlMini, "drools", Some("g")).await;
        let clips = registered_engine(&registry.url, DialectId::ClipsMini, "jess", Some("g")).await;
        for (e, decls) in [(&drl, DRL_DECLS), (&clips, CLIPS_DECLS)] {
            let c = EngineClient::from_base(&e.server.url);
            let spec = KnowledgeSetSpec::Full { name: "demo".into(), declarations: decls.into() };
            assert!(c.put_knowledge_sets(vec![spec]).await.unwrap()[0].is_ok());
        }
        let gateway = gateway(&registry.url).await;
        Mesh { registry, drl, clips, gateway }
    }

    fn id(e: &EngineServer) -> String {
        format!("urn:uuid:{}", e.entry_id.unwrap())
    }

    async fn post<T: serde::de::DeserializeOwned>(&self, path: &str, body: serde_json::Value) -> (StatusCode, T) {
        let resp = http().post(format!("{}{path}", self.gateway.url)).json(&body).send().await.unwrap();
        (resp.status(), resp.json().await.unwrap())
    }
}

fn canonical(dialect: DialectId, text: &str) -> ir::RuleIr {
    let doc = dialect.parse_document(text, None);
    let rule = doc.ok_rules().next().cloned();
    rule.unwrap_or_else(|| panic!("{:?}", doc.all_diagnostics()))
}

#[tokio::test]
async fn discover_lists_engines_with_liveness() {
    let m = Mesh::new().await;
    let cp = ControlPlane::new(&m.registry.url);
    let handles = cp.discover().await.unwrap();
    assert_eq!(handles.len(), 2);
    assert!(handles.iter().all(|h| h.live));
    let clips = ControlPlane::resolve(&handles, "jess").unwrap();
    assert_eq!(clips.descriptor.dialect, DialectId::ClipsMini);
    assert_eq!(clips.engine_id, Some(m.clips.service.engine_id));
    assert_eq!(ControlPlane::resolve(&handles, &Mesh::id(&m.drl)).unwrap().descriptor.title, "drools");

    let resp: Vec<EngineHandle> = http().get(format!("{}/api/engines", m.gateway.url)).send().await.unwrap().json().await.unwrap();
    assert_eq!(resp.len(), 2);

    m.clips.server.handle.abort();
    tokio::time::sleep(std::time::Duration::from_millis(50)).await;
    let handles = cp.discover().await.unwrap();
    assert_eq!(handles.len(), 2);
    assert!(!ControlPlane::resolve(&handles, "jess").unwrap().live);
}

#[tokio::test]
async fn propagated_put_reaches_the_other_dialect() {
    let m = Mesh::new().await;
    let (status, out): (_, Propagation<Vec<Verdict>>) =
        m.post("/api/put-rules", json!({"engine": "drools", "ks": "demo", "rules": [DRL_ADULT]})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(out.len(), 2);
    assert!(out.values().all(|o| o.results.as_ref().unwrap()[0].is_valid()), "{out:?}");

    let drl_rules = EngineClient::from_base(&m.drl.server.url).rules("demo", None).await.unwrap();
    let clips_rules = EngineClient::from_base(&m.clips.server.url).rules("demo", None).await.unwrap();
    assert_eq!(drl_rules[0].text, DRL_ADULT);
    assert!(clips_rules[0].text.starts_with("(defrule adult"));
    assert_eq!(canonical(DialectId::ClipsMini, &clips_rules[0].text), canonical(DialectId::DrlMini, DRL_ADULT));

    let (_, out): (_, Propagation<Vec<ItemResult>>) =
        m.post("/api/delete-rules", json!({"engine": "jess", "ks": "demo", "rules": ["adult", "ghost"]})).await;
    for o in out.values() {
        let r = o.results.as_ref().unwrap();
        assert!(r[0].is_ok());
        assert_eq!(r[1].error.as_ref().unwrap().code, Code::ENotFound);
    }
}

#[tokio::test]
async fn no_propagate_touches_only_the_target() {
    let m = Mesh::new().await;
    let (_, out): (_, Propagation<Vec<Verdict>>) =
        m.post("/api/put-rules", json!({"engine": "jess", "ks": "demo", "rules": [CLIPS_ADULT], "propagate": false})).await;
    assert_eq!(out.keys().cloned().collect::<Vec<_>>(), [Mesh::id(&m.clips)]);
    assert!(EngineClient::from_base(&m.drl.server.url).rules("demo", None).await.unwrap().is_empty());
}

#[tokio::test]
async fn not_rule_is_unsupported_everywhere() {
    let m = Mesh::new().await;
    let (_, out): (_, Propagation<Vec<Verdict>>) =
        m.post("/api/put-rules", json!({"engine": "jess", "ks": "demo", "rules": [CLIPS_NOT, CLIPS_ADULT]})).await;
    for o in out.values() {
        let v = o.results.as_ref().unwrap();
        assert_eq!(v[0].diagnostics[0].code, Code::EUnsupported, "{o:?}");
        assert!(v[0].diagnostics[0].detail.contains("not"));
        assert!(v[1].is_valid());
    }
}

#[tokio::test]
async fn dead_replica_is_reported_per_engine() {
    let m = Mesh::new().await;
    m.clips.server.handle.abort();
    tokio::time::sleep(std::time::Duration::from_millis(50)).await;
    let (status, out): (_, Propagation<Vec<Verdict>>) =
        m.post("/api/put-rules", json!({"engine": "drools", "ks": "demo", "rules": [DRL_ADULT]})).await;
    assert_eq!(status, StatusCode::OK);
    let replica: &EngineOutcome<_> = &out[&Mesh::id(&m.clips)];
    assert_eq!(replica.error.as_ref().unwrap().code, Code::EEngineUnreachable);
    assert!(out[&Mesh::id(&m.drl)].results.as_ref().unwrap()[0].is_valid());

    let (status, err): (_, ErrorBody) =
        m.post("/api/put-rules", json!({"engine": "jess", "ks": "demo", "rules": [CLIPS_ADULT]})).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    assert_eq!(err.diagnostic.code, Code::EEngineUnreachable);
}

#[tokio::test]
async fn translate_copy_and_translate() {
    let m = Mesh::new().await;
    EngineClient::from_base(&m.drl.server.url).put_rules("demo", vec![DRL_ADULT.into()]).await.unwrap();
    let (_, v): (_, Vec<Verdict>) = m
        .post("/api/translate-copy", json!({"src_engine": "drools", "src_ks": "demo", "rules": ["adult", "nope"], "dst_engine": "jess", "dst_ks": "demo"}))
        .await;
    assert!(v[0].is_valid());
    assert_eq!(v[1].diagnostics[0].code, Code::ENotFound);
    let copied: Vec<RuleEntry> = EngineClient::from_base(&m.clips.server.url).rules("demo", None).await.unwrap();
    assert_eq!(canonical(DialectId::ClipsMini, &copied[0].text), canonical(DialectId::DrlMini, DRL_ADULT));

    let (_, report): (_, TranslationReport) =
        m.post("/api/translate", json!({"text": format!("{CLIPS_NOT}\n{CLIPS_ADULT}"), "from": "clips-mini", "to": "drl-mini"})).await;
    assert_eq!(report.per_rule[0].status, Status::Error);
    assert_eq!(report.per_rule[1].status, Status::Ok);
    assert!(report.output_text.starts_with("rule \"adult\""));
    let (status, _): (_, ErrorBody) = m.post("/api/translate", json!({"text": "", "from": "jess", "to": "drl-mini"})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn proxy_matches_direct_calls() {
    let m = Mesh::new().await;
    let direct = EngineClient::from_base(&m.drl.server.url);
    let url = format!("{}/api/engines/drools/functional/demo/rules", m.gateway.url);
    let via: Vec<Verdict> = http().put(&url).json(&json!({"rules": [DRL_ADULT]})).send().await.unwrap().json().await.unwrap();
    assert!(via[0].is_valid());
    let again = direct.put_rules("demo", vec![DRL_ADULT.into()]).await.unwrap();
    let via_again: Vec<Verdict> = http().put(&url).json(&json!({"rules": [DRL_ADULT]})).send().await.unwrap().json().await.unwrap();
    assert_eq!(via_again, again);
    let listed: Vec<RuleEntry> = http().get(format!("{url}?filter=adu")).send().await.unwrap().json().await.unwrap();
    assert_eq!(listed, direct.rules("demo", Some("adu")).await.unwrap());

    let resp = http().get(format!("{}/api/engines/drools/functional/nope/rules", m.gateway.url)).send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::NOT_FOUND);
    let err: ErrorBody = resp.json().await.unwrap();
    assert_eq!(err.engine, Some(Mesh::id(&m.drl)));

    let (status, report): (_, rulemesh_core::engine::RunReport) = m.post("/api/run", json!({"engine": "drools", "ks": "demo"})).await;
    assert_eq!((status, report.firings), (StatusCode::OK, 0));

    let endpoints: Vec<Endpoint> = http().get(format!("{}/api/endpoints", m.gateway.url)).send().await.unwrap().json().await.unwrap();
    assert!(endpoints.iter().any(|e| e.path == "/api/put-rules"));
}

#[tokio::test]
async fn dead_registry_is_503() {
    let gw = gateway(&dead_url().await).await;
    let resp = http().get(format!("{}/api/engines", gw.url)).send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::SERVICE_UNAVAILABLE);
    let err: ErrorBody = resp.json().await.unwrap();
    assert_eq!(err.diagnostic.code, Code::ERegistryUnreachable);
}
