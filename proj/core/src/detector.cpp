#include "landet/detector.hpp"

#include <algorithm>
#include <sstream>

namespace landet {

Tensor generate_mask(const Model& g, const Tensor& x) {
    if (g.role != ModelRole::attention_net_g)
        fail(Error::Kind::invalid_argument, "generate_mask: model is not the attention net");
    Graph graph;
    const ForwardBinding fb = bind_forward(graph, g, graph.leaf(x));
    Tensor m = graph.value(fb.output_node);
    // peak-normalize: a mask encodes relative importance, so downstream
    // consumers should be insensitive to its overall brightness
    float peak = 0.0f;
    for (float v : m.data) peak = std::max(peak, v);
    if (peak > 1e-6f)
        for (float& v : m.data) v /= peak;
    return m;
}

DetectionVerdict detect(const Model& f1, const Model& g, const Model& f2,
                        const Tensor& x) {
    DetectionVerdict v;
    v.y1 = model_predict(f1, x).label;
    v.mask = generate_mask(g, x);
    v.y2 = model_predict(f2, v.mask).label;
    v.is_adversarial = v.y1 != v.y2;
    return v;
}

FilteredSet filter_benign_set(const Model& f1, const Model& g, const Model& f2,
                              const Dataset& labeled_test, FilterMode mode) {
    FilteredSet out;
    out.mode = mode;
    for (int i = 0; i < int(labeled_test.size()); ++i) {
        const LabeledImage& li = labeled_test.items[i];
        const int y2 = model_predict(f2, generate_mask(g, li.image)).label;
        if (y2 != li.label) continue;
        if (mode == FilterMode::strict &&
            model_predict(f1, li.image).label != li.label)
            continue;
        out.kept.push_back(li);
        out.kept_indices.push_back(i);
    }
    if (labeled_test.size() > 0)
        out.kept_fraction = double(out.kept.size()) / double(labeled_test.size());
    if (out.kept.empty())
        fail(Error::Kind::empty_result,
             "filter_benign_set: no image passed the mask filter");
    return out;
}

std::string verdicts_to_csv(const std::vector<VerdictRow>& rows) {
    std::ostringstream os;
    os << "index,y_true,y1,y2,is_adversarial,attack\n";
    for (const VerdictRow& r : rows)
        os << r.index << ',' << r.y_true << ',' << r.y1 << ',' << r.y2 << ','
           << (r.is_adversarial ? 1 : 0) << ',' << r.attack << '\n';
    return os.str();
}

std::vector<VerdictRow> verdicts_from_csv(const std::string& csv) {
    std::istringstream is(csv);
    std::string line;
    if (!std::getline(is, line) || line != "index,y_true,y1,y2,is_adversarial,attack")
        fail(Error::Kind::format, "bad verdict CSV header");
    std::vector<VerdictRow> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        VerdictRow r;
        char comma;
        int adv;
        if (!(ls >> r.index >> comma >> r.y_true >> comma >> r.y1 >> comma >> r.y2 >>
              comma >> adv >> comma))
            fail(Error::Kind::format, "bad verdict CSV row: " + line);
        r.is_adversarial = adv != 0;
        std::getline(ls, r.attack);
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace landet
