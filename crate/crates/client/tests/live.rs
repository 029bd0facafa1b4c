use reqwest::StatusCode;
use visperf_client::{ClientError, Demographics, ExperimentClient, ExportFilter, NextPayload};
use visperf_service::{bind, ServeConfig, StoreOptions};

async fn start(dir: &std::path::Path) -> ExperimentClient {
    let mut config = ServeConfig::new(dir, 5);
    config.port = Some(0);
    config.store = StoreOptions { durable: false, snapshot_every: 100 };
    let (listener, app) = bind(&config).await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    ExperimentClient::new(format!("http://{addr}/"))
}

#[tokio::test]
async fn complete_session_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let client = start(dir.path()).await;
    let created = client.create_session("p-01", None).await.unwrap();
    assert_eq!(created.design_seed, 5);
    let id = created.session_id;

    match client.create_session("p-01", Some(9)).await {
        Err(ClientError::Api { status, session_id, .. }) => {
            assert_eq!(status, StatusCode::CONFLICT);
            assert_eq!(session_id.as_deref(), Some(id.as_str()));
        }
        other => panic!("expected a conflict, got {other:?}"),
    }

    let mut breaks = 0;
    loop {
        match client.next(&id).await.unwrap() {
            NextPayload::Trial { trial_index, .. } => {
                let ack = client.submit(&id, trial_index, 33, 1500).await.unwrap();
                assert!(!ack.duplicate);
            }
            NextPayload::Break { .. } => breaks += 1,
            NextPayload::Demographics { .. } => break,
            NextPayload::Complete { .. } => panic!("completed before demographics"),
            _ => {}
        }
    }
    assert_eq!(breaks, 20);
    let err = client.submit(&id, 0, 0, 1).await.unwrap_err();
    assert!(matches!(err, ClientError::Api { status: StatusCode::BAD_REQUEST, .. }));

    let d = Demographics {
        gender: "m".into(),
        age: "41".into(),
        country: "CA".into(),
        degree: "PhD".into(),
        vis_experience: 6,
        stats_experience: 3,
    };
    assert!(matches!(client.demographics(&id, &d).await.unwrap(), NextPayload::Complete { .. }));
    let csv = client.export_csv(ExportFilter::default()).await.unwrap();
    assert_eq!(csv.lines().count(), 1201);
    assert!(csv.lines().skip(1).all(|l| l.starts_with("p-01,")));

    let missing = client.next("missing").await.unwrap_err();
    assert!(matches!(missing, ClientError::Api { status: StatusCode::NOT_FOUND, .. }));
}
