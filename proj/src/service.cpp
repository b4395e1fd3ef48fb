#include "histag/service.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <mutex>

#include <httplib.h>

#include "histag/evaluation.hpp"

namespace histag {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string* column_of(const AnnotatedToken& t, const std::string& column) {
    if (column == "form") return &t.form;
    if (column == "lemma") return &t.lemma;
    if (column == "pos") return &t.pos;
    if (column == "morph") return &t.morph;
    return nullptr;
}

std::string* editable_column(AnnotatedToken& t, const std::string& column) {
    if (column == "lemma") return &t.lemma;
    if (column == "pos") return &t.pos;
    if (column == "morph") return &t.morph;
    return nullptr;
}

std::string utc_now() {
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

HttpResponse json_response(int status, const json& body) { return {status, "application/json", body.dump()}; }

HttpResponse error_response(int status, const std::string& message) {
    return json_response(status, json{{"error", message}});
}

std::size_t param_size(const QueryParams& params, const std::string& key, std::size_t fallback) {
    auto it = params.find(key);
    if (it == params.end()) return fallback;
    try {
        std::size_t used = 0;
        long long v = std::stoll(it->second, &used);
        if (used != it->second.size() || v < 0) throw std::invalid_argument("negative");
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw InputError("bad value for " + key + ": '" + it->second + "'");
    }
}

std::optional<std::string> param(const QueryParams& params, const std::string& key) {
    auto it = params.find(key);
    if (it == params.end()) return std::nullopt;
    return it->second;
}

}  // namespace

// --- queries --------------------------------------------------------------

bool ConcordanceQuery::matches(const AnnotatedToken& token) const {
    for (const auto& [column, pattern] : filters) {
        const std::string* value = column_of(token, column);
        if (!value) return false;
        if (!pattern.empty() && pattern.back() == '*') {
            if (!starts_with(*value, std::string_view(pattern).substr(0, pattern.size() - 1))) return false;
        } else if (*value != pattern) {
            return false;
        }
    }
    return true;
}

void ConcordanceQuery::check() const {
    if (filters.empty()) throw InputError("query needs at least one filter");
    for (const auto& [column, pattern] : filters) {
        if (column != "form" && column != "lemma" && column != "pos" && column != "morph") {
            throw InputError("unknown filter column '" + column + "'");
        }
        if (pattern.empty()) throw InputError("empty filter on " + column);
        auto star = pattern.find('*');
        if (star != std::string::npos && star != pattern.size() - 1) {
            throw InputError("only a trailing '*' wildcard is supported");
        }
    }
    if (limit == 0 || limit > kMaxPageSize) {
        throw InputError("limit must lie in 1.." + std::to_string(kMaxPageSize));
    }
}

ConcordanceQuery ConcordanceQuery::from_json(const json& j) {
    ConcordanceQuery q;
    try {
        if (!j.is_object()) throw InputError("query must be a JSON object");
        if (j.contains("filters")) {
            for (const auto& [k, v] : j.at("filters").items()) q.filters[k] = v.get<std::string>();
        }
        q.offset = j.value("offset", q.offset);
        q.limit = j.value("limit", q.limit);
        q.context = j.value("context", q.context);
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed query: ") + e.what());
    }
    q.check();
    return q;
}

// --- sessions -------------------------------------------------------------

CorrectionSession::CorrectionSession(Document original, std::string journal_path)
    : original_(std::move(original)), journal_path_(std::move(journal_path)) {
    for (std::size_t s = 0; s < original_.sentences.size(); ++s) {
        for (std::size_t t = 0; t < original_.sentences[s].tokens.size(); ++t) index_.emplace_back(s, t);
    }
    if (!journal_path_.empty() && fs::exists(journal_path_)) {
        for (const auto& line : split(read_file(journal_path_), '\n')) {
            if (trim(line).empty()) continue;
            try {
                journal_.push_back(json::parse(line));
            } catch (const json::exception& e) {
                throw InputError("corrupt journal " + journal_path_ + ": " + e.what());
            }
        }
    }
    working_ = replay(original_, journal_);
}

Document CorrectionSession::replay(Document doc, const json& journal) {
    std::vector<std::pair<std::size_t, std::size_t>> index;
    for (std::size_t s = 0; s < doc.sentences.size(); ++s) {
        for (std::size_t t = 0; t < doc.sentences[s].tokens.size(); ++t) index.emplace_back(s, t);
    }
    try {
        for (const auto& entry : journal) {
            const std::string column = entry.at("column").get<std::string>();
            const std::string value = entry.at("value").get<std::string>();
            for (const auto& edit : entry.at("edits")) {
                auto i = edit.at("index").get<std::size_t>();
                if (i >= index.size()) throw InputError("journal edit beyond the document end");
                auto& tok = doc.at(index[i].first, index[i].second);
                std::string* cell = editable_column(tok, column);
                if (!cell) throw InputError("journal edits unknown column " + column);
                if (*cell != edit.at("old").get<std::string>()) {
                    throw InputError("journal does not fit the document at token " + std::to_string(i));
                }
                *cell = value;
            }
        }
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed journal entry: ") + e.what());
    }
    return doc;
}

void CorrectionSession::append(json entry) {
    if (!journal_path_.empty()) {
        std::ofstream out(journal_path_, std::ios::app | std::ios::binary);
        out << entry.dump() << "\n";
        out.flush();
        if (!out) throw RuntimeFailure("cannot append to journal " + journal_path_);
    }
    journal_.push_back(std::move(entry));
}

std::size_t CorrectionSession::batch_edit(const ConcordanceQuery& query, const std::string& column,
                                          const std::string& value, std::optional<std::size_t> expected_version) {
    query.check();
    AnnotatedToken probe;
    if (!editable_column(probe, column)) throw InputError("column must be lemma, pos or morph, got '" + column + "'");
    if (value.empty()) throw InputError("new value is empty");

    std::unique_lock lock(mu_);
    if (expected_version && *expected_version != journal_.size()) {
        throw ConflictError("corpus changed: version " + std::to_string(journal_.size()) + ", request was based on " +
                            std::to_string(*expected_version));
    }
    json edits = json::array();
    std::vector<std::size_t> hits;
    for (std::size_t i = 0; i < index_.size(); ++i) {
        const auto& tok = working_.at(index_[i].first, index_[i].second);
        if (query.matches(tok)) {
            hits.push_back(i);
            edits.push_back({{"index", i}, {"old", *column_of(tok, column)}});
        }
    }
    if (hits.empty()) return 0;

    Document next = working_;
    for (auto i : hits) {
        AnnotatedToken& tok = next.at(index_[i].first, index_[i].second);
        *editable_column(tok, column) = value;
        tok.check();
    }
    json entry = {{"kind", "batch"},
                  {"filters", query.filters},
                  {"column", column},
                  {"value", value},
                  {"edits", edits},
                  {"timestamp", utc_now()}};
    append(std::move(entry));
    working_ = std::move(next);
    return hits.size();
}

void CorrectionSession::edit_token(std::size_t index, const std::string& column, const std::string& value,
                                   std::optional<std::size_t> expected_version) {
    AnnotatedToken probe;
    if (!editable_column(probe, column)) throw InputError("column must be lemma, pos or morph, got '" + column + "'");
    if (value.empty()) throw InputError("new value is empty");
    std::unique_lock lock(mu_);
    if (index >= index_.size()) throw InputError("token index out of range");
    if (expected_version && *expected_version != journal_.size()) {
        throw ConflictError("corpus changed: version " + std::to_string(journal_.size()) + ", request was based on " +
                            std::to_string(*expected_version));
    }
    AnnotatedToken tok = working_.at(index_[index].first, index_[index].second);
    std::string old = *editable_column(tok, column);
    if (old == value) return;
    *editable_column(tok, column) = value;
    tok.check();
    append({{"kind", "token"},
            {"column", column},
            {"value", value},
            {"edits", json::array({{{"index", index}, {"old", old}}})},
            {"timestamp", utc_now()}});
    working_.at(index_[index].first, index_[index].second) = std::move(tok);
}

json CorrectionSession::token_json(std::size_t i) const {
    const auto& [s, t] = index_[i];
    const auto& tok = working_.at(s, t);
    return {{"index", i},   {"sentence", s},        {"token", t},          {"form", tok.form},
            {"lemma", tok.lemma}, {"pos", tok.pos}, {"morph", tok.morph}};
}

json CorrectionSession::corpus_info() const {
    std::shared_lock lock(mu_);
    return {{"id", original_.id},
            {"sentences", working_.sentences.size()},
            {"tokens", index_.size()},
            {"version", journal_.size()}};
}

json CorrectionSession::tokens(std::size_t offset, std::size_t limit) const {
    if (limit == 0 || limit > kMaxPageSize) throw InputError("limit must lie in 1.." + std::to_string(kMaxPageSize));
    std::shared_lock lock(mu_);
    json rows = json::array();
    for (std::size_t i = offset; i < index_.size() && i < offset + limit; ++i) rows.push_back(token_json(i));
    return {{"total", index_.size()}, {"offset", offset}, {"limit", limit}, {"version", journal_.size()},
            {"tokens", rows}};
}

json CorrectionSession::search(const ConcordanceQuery& query) const {
    query.check();
    std::shared_lock lock(mu_);
    json rows = json::array();
    std::size_t total = 0;
    for (std::size_t i = 0; i < index_.size(); ++i) {
        const auto& [s, t] = index_[i];
        if (!query.matches(working_.at(s, t))) continue;
        if (total >= query.offset && rows.size() < query.limit) {
            json row = token_json(i);
            const auto& toks = working_.sentences[s].tokens;
            json left = json::array(), right = json::array();
            for (std::size_t k = t > query.context ? t - query.context : 0; k < t; ++k) left.push_back(toks[k].form);
            for (std::size_t k = t + 1; k < toks.size() && k <= t + query.context; ++k) right.push_back(toks[k].form);
            row["left"] = left;
            row["right"] = right;
            rows.push_back(std::move(row));
        }
        ++total;
    }
    return {{"total", total}, {"offset", query.offset}, {"limit", query.limit}, {"version", journal_.size()},
            {"matches", rows}};
}

ValidationReport CorrectionSession::unallowed(const ReferenceSet& refs) const {
    std::shared_lock lock(mu_);
    return validate(working_, refs);
}

std::string CorrectionSession::export_tsv() const {
    std::shared_lock lock(mu_);
    return write_tsv(working_);
}

Document CorrectionSession::working() const {
    std::shared_lock lock(mu_);
    return working_;
}

json to_json(const ValidationReport& report) {
    auto list = [](const std::vector<ValidationEntry>& entries) {
        json out = json::array();
        for (const auto& e : entries) {
            out.push_back({{"document", e.document}, {"sentence", e.sentence}, {"token", e.token}, {"value", e.value}});
        }
        return out;
    };
    return {{"lemmas", list(report.unallowed_lemmas)},
            {"pos", list(report.unallowed_pos)},
            {"morph", list(report.unallowed_morph)},
            {"total", report.size()}};
}

// --- service --------------------------------------------------------------

Service::Service(ServiceConfig config) : config_(std::move(config)) {
    if (!config_.corpus_dir.empty()) {
        if (!fs::is_directory(config_.corpus_dir)) throw ConfigError("corpus directory not found: " + config_.corpus_dir);
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(config_.corpus_dir)) {
            if (entry.is_regular_file() && entry.path().extension() == ".tsv") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& p : files) {
            Document doc = read_corpus(p.string());
            auto journal = p;
            journal.replace_extension(".journal");
            std::string id = doc.id;
            sessions_[id] = std::make_unique<CorrectionSession>(std::move(doc), journal.string());
        }
    }
    if (!config_.model_dir.empty()) {
        if (!fs::is_directory(config_.model_dir)) throw ConfigError("model directory not found: " + config_.model_dir);
        ModelSet top = ModelSet::load_dir(config_.model_dir);
        if (!top.empty()) model_sets_["default"] = std::move(top);
        for (const auto& entry : fs::directory_iterator(config_.model_dir)) {
            if (!entry.is_directory()) continue;
            ModelSet set = ModelSet::load_dir(entry.path().string());
            if (!set.empty()) model_sets_[entry.path().filename().string()] = std::move(set);
        }
    }
}

void Service::add_model_set(const std::string& id, ModelSet set) { model_sets_[id] = std::move(set); }

void Service::add_corpus(Document doc) {
    std::string id = doc.id;
    sessions_[id] = std::make_unique<CorrectionSession>(std::move(doc), "");
}

CorrectionSession* Service::session(const std::string& id) {
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second.get();
}

std::vector<std::string> Service::corpus_ids() const {
    std::vector<std::string> out;
    for (const auto& [id, s] : sessions_) out.push_back(id);
    return out;
}

std::vector<std::vector<std::string>> parse_tag_body(const std::string& body) {
    std::vector<std::vector<std::string>> out;
    std::vector<std::string> current;
    bool first_row = true;
    for (auto line : split(body, '\n')) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) {
            if (!current.empty()) out.push_back(std::move(current));
            current.clear();
            continue;
        }
        if (line.front() == '#') continue;
        std::string form(trim(line.substr(0, line.find('\t'))));
        if (first_row && form == "form" && line.find('\t') != std::string::npos) {
            first_row = false;
            continue;
        }
        first_row = false;
        if (form.empty()) throw InputError("empty form in request body");
        current.push_back(form);
    }
    if (!current.empty()) out.push_back(std::move(current));
    if (out.empty()) throw InputError("request body contains no tokens");
    return out;
}

HttpResponse Service::tag(const QueryParams& params, const std::string& body) {
    if (model_sets_.empty()) return error_response(503, "no models loaded");
    std::string set_id = param(params, "models").value_or(model_sets_.size() == 1 ? model_sets_.begin()->first : "default");
    auto it = model_sets_.find(set_id);
    if (it == model_sets_.end()) return error_response(404, "unknown model set '" + set_id + "'");
    std::string format = param(params, "format").value_or("tsv");
    if (format != "tsv" && format != "json") return error_response(400, "format must be tsv or json");

    auto sentences = it->second.annotate(parse_tag_body(body));
    if (format == "json") {
        json out = json::array();
        for (const auto& s : sentences) {
            json row = json::array();
            for (const auto& t : s.tokens) {
                row.push_back({{"form", t.form}, {"lemma", t.lemma}, {"pos", t.pos}, {"morph", t.morph}});
            }
            out.push_back(row);
        }
        return json_response(200, json{{"models", set_id}, {"sentences", out}});
    }
    Document doc;
    doc.has_header = true;
    doc.sentences = std::move(sentences);
    return {200, "text/tab-separated-values; charset=utf-8", write_tsv(doc)};
}

HttpResponse Service::corpus_route(const std::string& method, const std::string& id, const std::string& action,
                                   const QueryParams& params, const std::string& body) {
    CorrectionSession* s = session(id);
    if (!s) return error_response(404, "unknown corpus '" + id + "'");

    auto parse_body = [&]() {
        try {
            return json::parse(body);
        } catch (const json::exception& e) {
            throw InputError(std::string("malformed JSON body: ") + e.what());
        }
    };
    auto version_of = [](const json& j) -> std::optional<std::size_t> {
        if (!j.contains("version") || j.at("version").is_null()) return std::nullopt;
        return j.at("version").get<std::size_t>();
    };

    if (method == "GET" && action == "tokens") {
        return json_response(200, s->tokens(param_size(params, "offset", 0), param_size(params, "limit", 50)));
    }
    if (method == "POST" && action == "search") {
        return json_response(200, s->search(ConcordanceQuery::from_json(parse_body())));
    }
    if (method == "POST" && action == "batch-edit") {
        json j = parse_body();
        if (!j.is_object()) throw InputError("body must be a JSON object");
        ConcordanceQuery q = ConcordanceQuery::from_json(json{{"filters", j.value("filters", json::object())}});
        std::size_t n = s->batch_edit(q, j.value("column", ""), j.value("value", ""), version_of(j));
        return json_response(200, json{{"edited", n}, {"version", s->version()}});
    }
    if (method == "POST" && action == "edit") {
        json j = parse_body();
        if (!j.is_object() || !j.contains("index")) throw InputError("body needs an index");
        s->edit_token(j.at("index").get<std::size_t>(), j.value("column", ""), j.value("value", ""), version_of(j));
        return json_response(200, json{{"edited", 1}, {"version", s->version()}});
    }
    if (method == "GET" && action == "unallowed") {
        if (!config_.references) return error_response(503, "reference lists not loaded");
        return json_response(200, to_json(s->unallowed(*config_.references)));
    }
    if (method == "GET" && action == "export") {
        return {200, "text/tab-separated-values; charset=utf-8", s->export_tsv()};
    }
    if (method == "GET" && action == "journal") return json_response(200, s->journal());
    return error_response(404, "no route " + method + " /corpus/" + id + "/" + action);
}

HttpResponse Service::handle(const std::string& method, const std::string& path, const QueryParams& params,
                             const std::string& body) {
    try {
        if (path == "/tag") {
            if (method != "POST") return error_response(405, "use POST");
            return tag(params, body);
        }
        if (path == "/corpora") {
            if (method != "GET") return error_response(405, "use GET");
            json out = json::array();
            for (const auto& [id, s] : sessions_) out.push_back(s->corpus_info());
            return json_response(200, out);
        }
        if (path == "/health") {
            json sets = json::array();
            for (const auto& [id, set] : model_sets_) sets.push_back(id);
            return json_response(200, json{{"status", "ok"}, {"model_sets", sets}});
        }
        const std::string prefix = "/corpus/";
        if (starts_with(path, prefix)) {
            auto rest = path.substr(prefix.size());
            auto slash = rest.find('/');
            if (slash != std::string::npos) return corpus_route(method, rest.substr(0, slash), rest.substr(slash + 1), params, body);
        }
        return error_response(404, "no route " + method + " " + path);
    } catch (const ConflictError& e) {
        return error_response(409, e.what());
    } catch (const InputError& e) {
        return error_response(400, e.what());
    } catch (const ConfigError& e) {
        return error_response(400, e.what());
    } catch (const json::exception& e) {
        return error_response(400, e.what());
    } catch (const std::exception& e) {
        return error_response(500, e.what());
    }
}

// --- http binding ---------------------------------------------------------

HttpServer::HttpServer(Service& service) : server_(std::make_unique<httplib::Server>()) {
    auto forward = [&service](const httplib::Request& req, httplib::Response& res) {
        QueryParams params(req.params.begin(), req.params.end());
        HttpResponse r = service.handle(req.method, req.path, params, req.body);
        res.status = r.status;
        res.set_content(r.body, r.content_type.c_str());
    };
    server_->Get(".*", forward);
    server_->Post(".*", forward);
}

HttpServer::~HttpServer() = default;

int HttpServer::bind(const std::string& host, int port) {
    if (port == 0) {
        int bound = server_->bind_to_any_port(host);
        if (bound < 0) throw RuntimeFailure("cannot bind " + host);
        return bound;
    }
    if (!server_->bind_to_port(host, port)) throw RuntimeFailure("cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void HttpServer::listen() { server_->listen_after_bind(); }

void HttpServer::stop() { server_->stop(); }

}  // namespace histag
