#include "keyetm/corpus.hpp"

#include <fstream>
#include <sstream>

#include "keyetm/errors.hpp"

namespace keyetm {
namespace {

// mirrors data/stopwords_en.txt; embedded so the library works without the data dir
const char* kStopwords =
    "a about above across after afterwards again against ain all almost alone along "
    "already also although always am among amongst an and another any anyhow anyone "
    "anything anyway anywhere are aren around as at be became because become becomes "
    "becoming been before beforehand behind being below beside besides between beyond "
    "both but by can cannot could couldn did didn do does doesn doing don done down "
    "during each either else elsewhere enough etc even ever every everyone everything "
    "everywhere except few for former formerly from further had hadn has hasn have "
    "haven having he hence her here hereafter hereby herein hereupon hers herself him "
    "himself his how however if in indeed instead into is isn it its itself just last "
    "latter latterly least less let like likely ll made many may maybe me meanwhile "
    "might mightn mine more moreover most mostly much must mustn my myself namely "
    "needn neither never nevertheless next no nobody none nonetheless noone nor not "
    "nothing now nowhere of off often on once one only onto or other others otherwise "
    "our ours ourselves out over own per perhaps quite rather re really same say says "
    "shan she should shouldn since so some somehow someone something sometime "
    "sometimes somewhere still such than that the their theirs them themselves then "
    "thence there thereafter thereby therefore therein thereupon these they this "
    "those though through throughout thru thus to together too toward towards under "
    "unless until up upon us ve very via was wasn we well were weren what whatever "
    "when whence whenever where whereafter whereas whereby wherein whereupon wherever "
    "whether which while whither who whoever whole whom whose why will with within "
    "without won would wouldn yet you your yours yourself yourselves";

}  // namespace

const std::unordered_set<std::string>& default_stopwords() {
    static const std::unordered_set<std::string> set = [] {
        std::unordered_set<std::string> s;
        std::istringstream in(kStopwords);
        std::string w;
        while (in >> w) s.insert(w);
        return s;
    }();
    return set;
}

std::unordered_set<std::string> load_stopwords(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open stopword list: " + path);
    std::unordered_set<std::string> s;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty()) s.insert(line);
    }
    return s;
}

}  // namespace keyetm
