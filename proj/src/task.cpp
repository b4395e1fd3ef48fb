#include "histag/task.hpp"

#include <cctype>

#include "histag/morph.hpp"

namespace histag {

std::string_view task_name(TaskId task) {
    switch (task) {
        case TaskId::LEMMA: return "LEMMA";
        case TaskId::POS: return "POS";
        case TaskId::CAS: return "CAS";
        case TaskId::DEGRE: return "DEGRE";
        case TaskId::GENRE: return "GENRE";
        case TaskId::MODE: return "MODE";
        case TaskId::NOMB: return "NOMB";
        case TaskId::PERS: return "PERS";
        case TaskId::TEMPS: return "TEMPS";
    }
    return "?";
}

TaskId parse_task(std::string_view name) {
    std::string upper;
    for (char c : name) upper.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    for (TaskId t : kAllTasks) {
        if (task_name(t) == upper) return t;
    }
    throw ConfigError("unknown task '" + std::string(name) + "'");
}

bool is_morph_task(TaskId task) { return task != TaskId::LEMMA && task != TaskId::POS; }

std::string task_label(TaskId task, const AnnotatedToken& token) {
    switch (task) {
        case TaskId::LEMMA: return token.lemma;
        case TaskId::POS: return token.pos;
        default: break;
    }
    try {
        return split_morph(token.morph).at(task_name(task));
    } catch (const InputError&) {
        return "_";
    }
}

std::vector<std::string> task_column(const std::vector<Sentence>& sentences, TaskId task) {
    std::vector<std::string> out;
    for (const auto& s : sentences) {
        for (const auto& t : s.tokens) out.push_back(task_label(task, t));
    }
    return out;
}

}  // namespace histag
