#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "chns/clustering.hpp"
#include "chns/encoder.hpp"
#include "chns/error.hpp"
#include "chns/evalkit.hpp"
#include "chns/kmeans.hpp"
#include "chns/loss.hpp"
#include "chns/rng.hpp"
#include "chns/sampler.hpp"
#include "chns/synthdata.hpp"
#include "chns/trainer.hpp"
#include "chns/vecmath.hpp"

namespace py = pybind11;
using namespace chns;

namespace {

Matrix to_matrix(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return Matrix();
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols())
      throw Error(ErrorCode::DimensionMismatch, "ragged row lengths");
    m.set_row(r, rows[r]);
  }
  return m;
}

std::vector<std::vector<double>> from_matrix(const Matrix& m) {
  std::vector<std::vector<double>> rows(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) rows[r] = m.row_vec(r);
  return rows;
}

PairLabelMatrix to_labels(const std::vector<std::vector<std::string>>& rows) {
  PairLabelMatrix labels(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.size())
      throw Error(ErrorCode::DimensionMismatch, "label matrix must be square");
    for (std::size_t j = 0; j < rows.size(); ++j) {
      const std::string& tag = rows[i][j];
      PairLabel l;
      if (tag == "SELF") {
        l = PairLabel::Self;
      } else if (tag == "P") {
        l = PairLabel::Positive;
      } else if (tag == "HN") {
        l = PairLabel::HardNegative;
      } else if (tag == "N") {
        l = PairLabel::Negative;
      } else {
        throw Error(ErrorCode::InvalidSpec, "unknown pair label: " + tag);
      }
      labels.set(i, j, l);
    }
  }
  return labels;
}

ScoredTrials to_scored(const std::vector<double>& scores, const std::vector<bool>& targets) {
  if (scores.size() != targets.size())
    throw Error(ErrorCode::DimensionMismatch, "scores and targets differ in length");
  return ScoredTrials{scores, targets};
}

}  // namespace

PYBIND11_MODULE(_chns, m) {
  m.doc() = "Clustering-based hard negative sampling lab: core operations";

  py::register_exception<Error>(m, "ChnsError");

  // Vector math.
  m.def("normalize", [](const Vec& v) { return normalize(v).values(); },
        "Scale a vector to unit Euclidean norm");
  m.def("cosine_sim", [](const Vec& a, const Vec& b) {
    return cosine_sim(normalize(a), normalize(b));
  });
  m.def("sq_euclidean", [](const Vec& a, const Vec& b) {
    return sq_euclidean(std::span<const double>(a), std::span<const double>(b));
  });
  m.def("centroid", [](const std::vector<Vec>& vs) {
    std::vector<Embedding> es;
    es.reserve(vs.size());
    for (const auto& v : vs) es.push_back(normalize(v));
    return centroid(es);
  });
  m.def("pairwise_similarity_matrix", [](const std::vector<Vec>& vs) {
    std::vector<Embedding> es;
    es.reserve(vs.size());
    for (const auto& v : vs) es.push_back(normalize(v));
    return from_matrix(pairwise_similarity_matrix(es));
  });

  // Clustering.
  m.def(
      "kmeans",
      [](const std::vector<std::vector<double>>& points, std::size_t k,
         std::uint64_t seed, std::size_t max_iter, double tol, std::size_t restarts) {
        KMeansOptions options{max_iter, tol, restarts};
        Matrix p = to_matrix(points);
        ClusterModel model = kmeans_fit(p, k, seed, options);
        py::dict out;
        out["centroids"] = from_matrix(model.centroids);
        out["labels"] = kmeans_assign(model, p);
        out["inertia"] = model.inertia;
        out["iterations"] = model.iterations_run;
        out["inertia_history"] = model.inertia_history;
        return out;
      },
      py::arg("points"), py::arg("k"), py::arg("seed") = 0, py::arg("max_iter") = 300,
      py::arg("tol") = 1e-6, py::arg("restarts") = 1);
  m.def("adjusted_rand_index", &adjusted_rand_index);

  // Loss surface.
  m.def("hardening_weight", &hardening_weight, py::arg("similarity"), py::arg("beta"));
  m.def(
      "contrastive_loss",
      [](const std::vector<std::vector<double>>& similarity,
         const std::vector<std::vector<std::string>>& labels, double beta, double tau,
         bool tau_trainable) {
        ContrastiveConfig cfg;
        cfg.beta = beta;
        cfg.tau_trainable = tau_trainable;
        auto out = contrastive_loss(to_matrix(similarity), to_labels(labels), cfg, tau);
        py::dict result;
        result["value"] = out.value;
        result["grad_similarity"] = from_matrix(out.grad_similarity);
        result["grad_log_tau"] = out.grad_log_tau;
        return result;
      },
      py::arg("similarity"), py::arg("labels"), py::arg("beta") = 0.0,
      py::arg("tau") = 0.1, py::arg("tau_trainable") = true);
  m.def(
      "contrastive_loss_grad_check",
      [](const std::vector<std::vector<double>>& similarity,
         const std::vector<std::vector<std::string>>& labels, double beta, double tau,
         double h) {
        ContrastiveConfig cfg;
        cfg.beta = beta;
        return contrastive_loss_grad_check(to_matrix(similarity), to_labels(labels), cfg,
                                           tau, h);
      },
      py::arg("similarity"), py::arg("labels"), py::arg("beta") = 0.0,
      py::arg("tau") = 0.1, py::arg("h") = 1e-6);
  m.def(
      "aam_softmax_loss",
      [](const std::vector<std::vector<double>>& embeddings,
         const std::vector<std::vector<double>>& class_weights,
         const std::vector<std::size_t>& targets, double margin, double scale) {
        auto out =
            aam_softmax_loss(to_matrix(embeddings), to_matrix(class_weights), targets,
                             margin, scale);
        py::dict result;
        result["value"] = out.value;
        result["grad_embeddings"] = from_matrix(out.grad_embeddings);
        result["grad_weights"] = from_matrix(out.grad_weights);
        return result;
      },
      py::arg("embeddings"), py::arg("class_weights"), py::arg("targets"),
      py::arg("margin") = 0.2, py::arg("scale") = 30.0);

  // Metrics.
  m.def(
      "compute_eer",
      [](const std::vector<double>& scores, const std::vector<bool>& targets) {
        auto r = compute_eer(to_scored(scores, targets));
        return py::make_tuple(r.eer, r.threshold);
      },
      py::arg("scores"), py::arg("targets"));
  m.def(
      "compute_min_dcf",
      [](const std::vector<double>& scores, const std::vector<bool>& targets,
         double p_target, double c_miss, double c_fa, bool normalized) {
        auto r = compute_min_dcf(to_scored(scores, targets), p_target, c_miss, c_fa,
                                 normalized);
        return py::make_tuple(r.min_dcf, r.threshold);
      },
      py::arg("scores"), py::arg("targets"), py::arg("p_target") = 0.05,
      py::arg("c_miss") = 1.0, py::arg("c_fa") = 1.0, py::arg("normalized") = false);

  // Schedules.
  m.def("lr_at", &lr_at, py::arg("step"), py::arg("total_steps"),
        py::arg("warmup_fraction"), py::arg("max_lr"));

  // Synthetic corpus generation (optionally persisted in the on-disk formats).
  m.def(
      "generate_corpus",
      [](std::size_t n_families, std::size_t speakers_per_family,
         std::size_t utterances_per_speaker, std::size_t feature_dim,
         std::size_t latent_dim, double speaker_spread, double session_noise,
         std::uint64_t seed, const std::string& out_dir) {
        CorpusSpec spec;
        spec.n_families = n_families;
        spec.speakers_per_family = speakers_per_family;
        spec.utterances_per_speaker = utterances_per_speaker;
        spec.feature_dim = feature_dim;
        spec.latent_dim = latent_dim;
        spec.speaker_spread = speaker_spread;
        spec.session_noise = session_noise;
        auto corpus = generate_corpus(spec, seed);
        if (!out_dir.empty()) {
          save_manifest(corpus.manifest, out_dir + "/manifest.json", seed);
          save_features(corpus.features.rows, out_dir + "/features.bin");
        }
        py::dict out;
        std::vector<std::string> speakers, utterances;
        for (const auto& s : corpus.manifest.speakers()) speakers.push_back(s.id);
        for (const auto& u : corpus.manifest.utterances()) utterances.push_back(u.id);
        out["speakers"] = speakers;
        out["utterances"] = utterances;
        out["families"] = corpus.family_of_speaker;
        out["features"] = from_matrix(corpus.features.rows);
        out["speaker_latents"] = from_matrix(corpus.speaker_latents);
        return out;
      },
      py::arg("n_families") = 20, py::arg("speakers_per_family") = 10,
      py::arg("utterances_per_speaker") = 30, py::arg("feature_dim") = 40,
      py::arg("latent_dim") = 16, py::arg("speaker_spread") = 0.05,
      py::arg("session_noise") = 0.1, py::arg("seed") = 42, py::arg("out_dir") = "");

  // Batch sampling on an in-memory corpus description.
  m.def(
      "chns_sample_batch",
      [](const std::vector<std::pair<std::string, std::vector<std::string>>>& speakers,
         const std::vector<std::pair<std::string, std::size_t>>& assignment,
         std::size_t batch_size, double hard_ratio, std::uint64_t seed) {
        std::vector<SpeakerInfo> infos;
        std::vector<UtteranceInfo> utts;
        std::size_t row = 0;
        for (const auto& [speaker, utterances] : speakers) {
          infos.push_back({speaker, {}});
          for (const auto& u : utterances) utts.push_back({u, speaker, row++});
        }
        CorpusManifest manifest(4, std::move(infos), std::move(utts));

        SpeakerClusterMap map;
        map.k = 0;
        for (const auto& [speaker, cluster] : assignment) {
          map.assignment[speaker] = cluster;
          map.k = std::max(map.k, cluster + 1);
        }
        map.rosters.assign(map.k, {});
        for (const auto& [speaker, cluster] : map.assignment)
          map.rosters[cluster].push_back(speaker);

        BatchSpec spec{batch_size, hard_ratio};
        auto rng = make_rng(seed);
        Batch batch = chns_sample_batch(map, manifest, spec, rng);

        py::list slots;
        for (std::size_t s = 0; s < batch.n_slots(); ++s)
          slots.append(py::make_tuple(batch.slot_speaker(s), batch.slot_utterance(s)));
        py::list provenance;
        for (const auto& s : batch.speakers)
          provenance.append(s.cluster ? py::cast(*s.cluster) : py::none());
        PairLabelMatrix labels = pair_labels(batch);
        std::vector<std::vector<std::string>> label_rows(
            labels.size(), std::vector<std::string>(labels.size()));
        for (std::size_t i = 0; i < labels.size(); ++i)
          for (std::size_t j = 0; j < labels.size(); ++j) {
            switch (labels.at(i, j)) {
              case PairLabel::Self: label_rows[i][j] = "SELF"; break;
              case PairLabel::Positive: label_rows[i][j] = "P"; break;
              case PairLabel::HardNegative: label_rows[i][j] = "HN"; break;
              case PairLabel::Negative: label_rows[i][j] = "N"; break;
            }
          }
        py::dict out;
        out["slots"] = slots;
        out["provenance"] = provenance;
        out["source_clusters"] = batch.source_clusters;
        out["pair_labels"] = label_rows;
        return out;
      },
      py::arg("speakers"), py::arg("assignment"), py::arg("batch_size"),
      py::arg("hard_ratio"), py::arg("seed") = 0);
}
