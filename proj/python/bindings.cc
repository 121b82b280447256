// SPDX-License-Identifier: Apache-2.0

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <sstream>

#include "biortd/metrics.h"
#include "biortd/optim.h"
#include "biortd/rtd.h"
#include "biortd/tokenizer.h"

namespace py = pybind11;
using namespace biortd;

namespace {

py::dict PrfDict(const PrfReport& r) {
  py::dict d;
  d["precision"] = r.precision;
  d["recall"] = r.recall;
  d["f1"] = r.f1;
  d["tp"] = r.tp;
  d["fp"] = r.fp;
  d["fn"] = r.fn;
  return d;
}

std::vector<std::vector<std::string>> Pieces(const py::object& words_or_text,
                                             const Vocabulary& vocab) {
  std::vector<std::string> words;
  if (py::isinstance<py::str>(words_or_text)) {
    words = PreTokenize(words_or_text.cast<std::string>());
  } else {
    words = words_or_text.cast<std::vector<std::string>>();
  }
  return TokenizeWords(words, vocab);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Tokenizer, metric and schedule helpers of the biortd C++ core.";

  py::class_<Vocabulary>(m, "Vocabulary")
      .def_static("from_tokens", &Vocabulary::FromTokens, py::arg("tokens"))
      .def_static("load", [](const std::string& path) { return Vocabulary::Load(path); })
      .def("save", [](const Vocabulary& v, const std::string& path) { v.Save(path); })
      .def("__len__", &Vocabulary::size)
      .def("id", [](const Vocabulary& v, const std::string& t) { return v.IdOrUnk(t); })
      .def("token", &Vocabulary::Token)
      .def_property_readonly("tokens", &Vocabulary::tokens)
      .def_property_readonly("mask_id", &Vocabulary::mask_id);

  py::class_<Encoding>(m, "Encoding")
      .def_readonly("ids", &Encoding::ids)
      .def_readonly("tokens", &Encoding::tokens)
      .def_readonly("segment_ids", &Encoding::segment_ids)
      .def_readonly("attention_mask", &Encoding::attention_mask)
      .def_readonly("word_map", &Encoding::word_map)
      .def("__len__", &Encoding::size);

  m.def("normalize", [](const std::string& s) { return Normalize(s); });
  m.def("pre_tokenize", [](const std::string& s) { return PreTokenize(s); });
  m.def("wordpiece", [](const std::string& word, const Vocabulary& v) { return WordPiece(word, v); },
        py::arg("word"), py::arg("vocab"));
  m.def("tokenize", &Pieces, py::arg("words"), py::arg("vocab"),
        "Pieces per word; a string is pre-tokenized first.");
  m.def(
      "encode",
      [](const std::vector<std::string>& a, std::optional<std::vector<std::string>> b,
         const Vocabulary& v, int max_len) {
        if (b) return Encode(a, std::span<const std::string>(*b), v, max_len);
        return Encode(a, std::nullopt, v, max_len);
      },
      py::arg("words_a"), py::arg("words_b") = py::none(), py::arg("vocab"),
      py::arg("max_len") = 512);

  m.def("f1", &F1, py::arg("precision"), py::arg("recall"));
  m.def("extract_chunks", [](const std::vector<std::string>& tags) {
    std::vector<std::tuple<int, int, std::string>> out;
    for (const auto& c : ExtractChunks(tags)) out.emplace_back(c.start, c.end, c.type);
    return out;
  });
  m.def(
      "entity_prf",
      [](const std::vector<std::vector<std::string>>& gold,
         const std::vector<std::vector<std::string>>& pred) {
        return PrfDict(EntityPrfFromTags(gold, pred));
      },
      py::arg("gold"), py::arg("predicted"));
  m.def(
      "relation_prf",
      [](const std::vector<std::string>& gold, const std::vector<std::string>& pred,
         const std::vector<std::string>& positive, const std::string& negative) {
        return PrfDict(RelationPrf(gold, pred, positive, negative));
      },
      py::arg("gold"), py::arg("predicted"), py::arg("positive_classes"),
      py::arg("negative_label"));
  m.def(
      "qa_metrics",
      [](const std::map<std::string, std::vector<std::string>>& gold,
         const std::map<std::string, std::vector<std::string>>& pred, bool case_sensitive) {
        std::vector<QaGold> g;
        for (const auto& [id, answers] : gold) g.push_back({id, answers});
        const QaReport r = QaMetrics(g, pred, case_sensitive);
        py::dict d;
        d["sacc"] = r.sacc;
        d["lacc"] = r.lacc;
        d["mrr"] = r.mrr;
        d["questions"] = r.questions;
        return d;
      },
      py::arg("gold"), py::arg("predicted"), py::arg("case_sensitive") = false);
  m.def(
      "score_table",
      [](const std::string& table) {
        std::istringstream in(table);
        const auto entries = ParseMrrTable(in, "<string>");
        const ScoreTable t = BuildScoreTable(entries);
        py::dict d;
        d["ratio"] = t.ratio;
        d["total"] = t.total;
        d["batches"] = t.batches;
        return d;
      },
      py::arg("table"), "Ratios to the per-batch best MRR from a CSV/TSV table.");

  m.def("mask_count", &MaskCount, py::arg("n_maskable"), py::arg("rate") = 0.15);
  m.def(
      "lr_at",
      [](double peak, int64_t warmup, int64_t total, int64_t step) {
        return LinearSchedule{peak, warmup, total}.At(step);
      },
      py::arg("peak"), py::arg("warmup"), py::arg("total"), py::arg("step"));
  m.def("layerwise_lrs", &LayerwiseLrs, py::arg("base_lr"), py::arg("decay"),
        py::arg("num_layers"));
}
