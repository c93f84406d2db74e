#include "modsteer/synthetic.hpp"

#include <array>
#include <random>
#include <string>
#include <string_view>

namespace modsteer {

namespace {

struct TaskPool {
    TaskType task;
    std::string_view question;
    std::vector<std::string_view> answers;
    std::vector<std::string_view> openings; // "{}" marks the answer
};

const std::vector<TaskPool> & pools() {
    static const std::vector<TaskPool> p = {
        {TaskType::Sport, "What sport is being played?",
         {"tennis", "badminton", "soccer", "rugby", "baseball", "cricket", "hockey", "volleyball"},
         {"The crowd cheered as the teams played {} on the field all afternoon.",
          "Everyone in the park gathered to watch a friendly game of {}.",
          "The coach blew the whistle to start the {} match before noon."}},
        {TaskType::Attribute, "What material is the object made of?",
         {"wood", "metal", "plastic", "glass", "stone", "leather", "wicker", "ceramic"},
         {"The old chair in the corner was built entirely from {}.",
          "Her favorite bowl, made of {}, sat on the shelf by the window.",
          "The craftsman explained that the bench was made of {} last spring."}},
        {TaskType::Sentiment, "What is the emotion of the person?",
         {"happy", "sad", "angry", "calm", "scared", "excited", "bored", "proud"},
         {"After hearing the news the girl looked {} for the rest of the day.",
          "He sat by the lake feeling {} while the sun went down.",
          "Everyone could tell the old man was {} when he opened the letter."}},
        {TaskType::Positional, "Where is the animal relative to the table?",
         {"under", "beside", "behind", "above", "inside", "below", "near", "atop"},
         {"The puppy slept {} the table during the whole dinner.",
          "A small cat was hiding {} the table when guests arrived.",
          "The kitten curled up {} the table and refused to move."}},
        {TaskType::Counting, "How many people are in the picture?",
         {"two", "three", "four", "five", "six", "seven", "eight", "nine"},
         {"Exactly {} people waited together at the bus stop in the rain.",
          "The photo shows a group of {} people smiling at the camera.",
          "At the picnic {} people shared sandwiches under a large tree."}},
        {TaskType::Color, "What color is the vehicle?",
         {"red", "blue", "green", "yellow", "white", "black", "orange", "purple"},
         {"A shiny {} truck was parked outside the bakery this morning.",
          "The {} bus drove slowly down the narrow street.",
          "Someone left a {} scooter leaning against the wall."}},
        {TaskType::Activity, "What is the person doing?",
         {"running", "cycling", "swimming", "reading", "cooking", "painting", "sleeping", "dancing"},
         {"The young woman spent the whole afternoon {} near the river.",
          "Her brother was {} in the garden when the phone rang.",
          "The man has been {} since early this morning."}},
        {TaskType::Object, "What object is on the desk?",
         {"laptop", "typewriter", "lamp", "notebook", "telephone", "globe", "calculator", "stapler"},
         {"On the desk there was only a dusty {} next to a cup.",
          "The manager placed a new {} on the desk before the meeting.",
          "A single {} sat on the wooden desk by the window."}},
    };
    return p;
}

constexpr std::array<std::string_view, 4> kFiller = {
    "Nobody remembered much about that quiet afternoon in town.",
    "The weather stayed mild and the streets were mostly empty.",
    "It was an ordinary day and nothing unusual was reported.",
    "People came and went while the shops slowly closed for the evening.",
};

std::string fill(std::string_view pattern, std::string_view answer) {
    std::string out(pattern);
    const size_t at = out.find("{}");
    out.replace(at, 2, answer);
    return out;
}

ConflictSample draw(const TaskPool & pool, size_t index, std::mt19937_64 & rng, std::string_view prefix) {
    const size_t na = pool.answers.size();
    const size_t iv = static_cast<size_t>(rng() % na);
    const size_t it = (iv + 1 + static_cast<size_t>(rng() % (na - 1))) % na;
    const size_t io = static_cast<size_t>(rng() % pool.openings.size());
    ConflictSample s;
    s.task_type = pool.task;
    s.id = std::string(prefix) + "-" + std::string(to_string(pool.task)) + "-" + std::to_string(index);
    s.image_ref = "synthetic/" + s.id + ".jpg";
    s.question = std::string(pool.question);
    s.answer_vision = std::string(pool.answers[iv]);
    s.answer_text = std::string(pool.answers[it]);
    s.text_context = fill(pool.openings[io], s.answer_text);
    return s;
}

} // namespace

std::vector<ConflictSample> synthetic_conflicts(size_t n, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<ConflictSample> out;
    out.reserve(n);
    const auto & p = pools();
    for (size_t i = 0; i < n; ++i) out.push_back(draw(p[i % p.size()], i, rng, "syn"));
    return out;
}

ReliabilityFixture reliability_fixture(size_t n, uint64_t seed) {
    std::mt19937_64 rng(seed);
    ReliabilityFixture fx;
    const auto & p = pools();
    for (size_t i = 0; i < n; ++i) {
        ReliabilityCase c;
        c.sample = draw(p[i % p.size()], i, rng, "rel");
        if (i % 2 == 0) {
            c.sample.text_context = std::string(kFiller[rng() % kFiller.size()]);
            c.reliable = Modality::Vision;
            fx.scene_samples.push_back(c.sample);
        } else {
            c.sample.image_ref = "unregistered/" + c.sample.id + ".jpg";
            c.reliable = Modality::Text;
        }
        fx.cases.push_back(std::move(c));
    }
    return fx;
}

} // namespace modsteer
