use prefdens_client::api::Policy;
use prefdens_client::{Client, ClientError};
use prefdens_core::basis::ClusterStructure;
use prefdens_core::mixture::{em_fit, EmConfig, PriorConfig};
use prefdens_core::model_file::{ModelFile, Provenance};
use prefdens_core::synth::{sample_database, three_attribute_domain, GeneratorSpec};
use prefdens_server::{AppState, ServerConfig};

async fn spawn_server() -> Client {
    let d = three_attribute_domain();
    let s = [ClusterStructure::new([vec![0, 1], vec![1, 2]])];
    let spec = GeneratorSpec::draw(&d, &s, vec![1.0], 2).unwrap();
    let sample = sample_database(&spec.with_data(80, 0.1, 2)).unwrap();
    let fit = em_fit(&d, &s, &sample.db, &EmConfig::default(), &PriorConfig::default()).unwrap();
    let file = ModelFile::from_model(&fit.model, Provenance::default());
    let state = AppState::new(
        &file,
        &ServerConfig {
            calibration_sims: 100,
            noise_sd: Some(1e-4),
            ..Default::default()
        },
    )
    .unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(prefdens_server::serve(listener, state));
    Client::new(format!("http://{addr}/"))
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn drives_a_session_to_completion() {
    let client = spawn_server().await;
    let model = client.model().await.unwrap();
    assert_eq!(model.num_outcomes, 12);

    let created = client.create_session(Policy::Variance).await.unwrap();
    let mut question = created.question;
    let mut asked = 0;
    let mut stop = false;
    while let Some(q) = question {
        let r = client
            .answer(&created.session_id, q.outcome_id, 0.1 * q.outcome_id as f64)
            .await
            .unwrap();
        asked += 1;
        stop = r.stop_suggested;
        question = r.next_question;
    }
    assert!(asked > 0 && asked <= 12);

    let summary = client.session(&created.session_id).await.unwrap();
    assert_eq!(summary.answers.len(), asked);
    assert_eq!(summary.stop_suggested, stop);
    let preds = client.predictions(&created.session_id).await.unwrap();
    assert_eq!(preds.len(), 12 - asked);
    assert_eq!(preds, summary.predictions);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn error_statuses_surface_as_api_errors() {
    let client = spawn_server().await;
    match client.session("missing").await {
        Err(ClientError::Api { status, message }) => {
            assert_eq!(status.as_u16(), 404);
            assert!(message.contains("missing"));
        }
        other => panic!("expected 404, got {other:?}"),
    }
    let s = client.create_session(Policy::Rref).await.unwrap();
    let o = s.question.unwrap().outcome_id;
    client.answer(&s.session_id, o, 0.5).await.unwrap();
    let err = client.answer(&s.session_id, o, 0.5).await.unwrap_err();
    assert!(matches!(err, ClientError::Api { status, .. } if status.as_u16() == 409));
    let err = client.answer(&s.session_id, 500, 0.5).await.unwrap_err();
    assert!(matches!(err, ClientError::Api { status, .. } if status.as_u16() == 422));
}
