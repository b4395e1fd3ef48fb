#pragma once

// HTTP/JSON facade for tagging and post-correction sessions.
//
// Service holds the state and answers requests as plain values so that it can
// be tested without sockets; HttpServer binds it to cpp-httplib.

#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "histag/corpus.hpp"
#include "histag/tagger.hpp"

namespace httplib {
class Server;
}

namespace histag {

struct HttpResponse {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;

    nlohmann::json json() const { return nlohmann::json::parse(body); }
};

using QueryParams = std::multimap<std::string, std::string>;

struct ServiceConfig {
    /// Directory of "<id>.tsv" corpora; journals are kept next to them.
    std::string corpus_dir;
    /// Either a directory of "<task>.model" files (model set "default") or a
    /// directory of such directories, one per model set.
    std::string model_dir;
    std::optional<ReferenceSet> references;
};

inline constexpr std::size_t kMaxPageSize = 1000;

/// Column filters of a concordance query. A value ending in '*' matches by
/// prefix; anything else must match exactly.
struct ConcordanceQuery {
    std::map<std::string, std::string> filters;
    std::size_t offset = 0;
    std::size_t limit = 50;
    std::size_t context = 5;

    bool matches(const AnnotatedToken& token) const;
    /// Throws InputError on an empty filter set, an unknown column or a
    /// wildcard outside the trailing position.
    void check() const;
    static ConcordanceQuery from_json(const nlohmann::json& j);
};

/// One corpus under correction: the original document, the edit journal and
/// the working document obtained by replaying it.
class CorrectionSession {
public:
    CorrectionSession(Document original, std::string journal_path);

    const std::string& id() const { return original_.id; }
    std::size_t version() const { return journal_.size(); }

    /// Edits `column` of every token matching the query, as one journal
    /// entry. Returns the number of edited tokens. Throws ConflictError when
    /// `expected_version` is given and stale.
    std::size_t batch_edit(const ConcordanceQuery& query, const std::string& column, const std::string& value,
                           std::optional<std::size_t> expected_version = std::nullopt);
    /// Edits one token addressed by its document-order index.
    void edit_token(std::size_t index, const std::string& column, const std::string& value,
                    std::optional<std::size_t> expected_version = std::nullopt);

    nlohmann::json corpus_info() const;
    nlohmann::json tokens(std::size_t offset, std::size_t limit) const;
    nlohmann::json search(const ConcordanceQuery& query) const;
    ValidationReport unallowed(const ReferenceSet& refs) const;
    std::string export_tsv() const;
    Document working() const;
    const nlohmann::json& journal() const { return journal_; }

    /// Applies a journal to a document; throws InputError when an entry does
    /// not fit the document.
    static Document replay(Document doc, const nlohmann::json& journal);

private:
    nlohmann::json token_json(std::size_t index) const;
    void append(nlohmann::json entry);

    Document original_;
    Document working_;
    std::vector<std::pair<std::size_t, std::size_t>> index_;
    nlohmann::json journal_ = nlohmann::json::array();
    std::string journal_path_;
    mutable std::shared_mutex mu_;
};

class ConflictError : public Error {
public:
    using Error::Error;
};

class Service {
public:
    explicit Service(ServiceConfig config);

    HttpResponse handle(const std::string& method, const std::string& path, const QueryParams& params,
                        const std::string& body);

    void add_model_set(const std::string& id, ModelSet set);
    /// Adds a corpus held in memory only (no journal file).
    void add_corpus(Document doc);
    CorrectionSession* session(const std::string& id);
    std::vector<std::string> corpus_ids() const;

private:
    HttpResponse tag(const QueryParams& params, const std::string& body);
    HttpResponse corpus_route(const std::string& method, const std::string& id, const std::string& action,
                              const QueryParams& params, const std::string& body);

    ServiceConfig config_;
    std::map<std::string, ModelSet> model_sets_;
    std::map<std::string, std::unique_ptr<CorrectionSession>> sessions_;
};

/// Splits a /tag body into sentences of forms: one token per line, blank
/// lines between sentences, TSV rows contribute their first column and a
/// "form" header row is skipped.
std::vector<std::vector<std::string>> parse_tag_body(const std::string& body);

nlohmann::json to_json(const ValidationReport& report);

class HttpServer {
public:
    explicit HttpServer(Service& service);
    ~HttpServer();

    /// Binds to `port` (0 picks a free port) and returns the bound port.
    int bind(const std::string& host, int port);
    /// Blocks serving requests until stop().
    void listen();
    void stop();

private:
    std::unique_ptr<httplib::Server> server_;
};

}  // namespace histag
