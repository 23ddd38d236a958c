"""Topic table for the synthetic retrieval benchmark.

Every topic pairs a formal server description (what a tool author writes)
with a pool of everyday words users reach for instead. The two vocabularies
are disjoint per topic, which is the lexical gap that query augmentation is
meant to close. Vernacular pools are also disjoint across topics.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Topic:
    server_id: str
    tool: str
    description: str
    vernacular: tuple[str, ...]


def _t(server_id: str, tool: str, description: str, words: str) -> Topic:
    return Topic(server_id, tool, description, tuple(words.split()))


TOPICS: tuple[Topic, ...] = (
    _t("weather", "get_weather",
       "Provides meteorological forecasts and current conditions for a city on a given date.",
       "umbrella rain sunny chilly jacket sunscreen snow humid windy storm"),
    _t("top-attractions", "search",
       "Lists notable tourist attractions and landmarks in a city ranked by popularity.",
       "sightseeing must-see spots famous museums palaces temples sights tour gardens"),
    _t("hotel-booking", "book_hotel",
       "Reserves hotel accommodation in a city for specified check-in and check-out dates.",
       "room stay nights bed suite lodging hostel inn sleep breakfast"),
    _t("path-planner", "plan_route",
       "Computes an optimized travel route connecting an origin with a sequence of stops.",
       "itinerary directions order shortest walk map navigate loop way getting"),
    _t("flight-booking", "search_flights",
       "Searches and books airline flights between airports.",
       "fly plane airfare nonstop layover boarding seat jet aisle roundtrip"),
    _t("restaurant-finder", "find_restaurants",
       "Finds dining establishments filtered by cuisine and neighborhood.",
       "eat dinner lunch food hungry noodles dumplings brunch vegan takeout"),
    _t("currency-exchange", "convert",
       "Converts monetary amounts between currencies using current exchange rates.",
       "dollars euros yuan cash money swap yen pounds wallet worth"),
    _t("train-tickets", "search_trains",
       "Sells railway tickets and shows train timetables between stations.",
       "rail bullet sleeper carriage platform commute departs highspeed coach berth"),
    _t("car-rental", "rent_car",
       "Rents motor vehicles for self-drive pickup at a location.",
       "car drive suv van keys mileage convertible sedan hatchback roadtrip"),
    _t("ride-hailing", "request_ride",
       "Dispatches on-demand chauffeured transport from a pickup point.",
       "taxi cab uber lift driver fare ride honk minicab carpool"),
    _t("visa-info", "visa_requirements",
       "Reports entry requirements and visa regulations for international travelers.",
       "passport embassy stamp border customs permit consulate immigration paperwork allowed"),
    _t("translation", "translate",
       "Translates text between natural languages.",
       "say phrase mandarin french spanish speak chinese pronounce interpret subtitle"),
    _t("news", "headlines",
       "Aggregates current headlines and articles from news publishers.",
       "happening latest breaking story politics press updates scandal journalism tabloid"),
    _t("stock-quotes", "quote",
       "Returns equity prices and market data for listed companies.",
       "shares ticker nasdaq dow invest portfolio trading bullish dividend broker"),
    _t("crypto-prices", "coin_price",
       "Quotes cryptocurrency valuations on digital asset exchanges.",
       "bitcoin ethereum coin btc blockchain altcoin hodl doge mining token"),
    _t("email-sender", "send_email",
       "Composes and delivers electronic mail messages to recipients.",
       "inbox send gmail cc reply newsletter attach forward spam outlook"),
    _t("calendar", "create_event",
       "Manages scheduled events and appointments on a personal agenda.",
       "meeting remind busy slot invite reschedule standup free diary birthday"),
    _t("maps-geocoding", "geocode",
       "Resolves street addresses into geographic coordinates.",
       "where latitude longitude pin located gps postcode zip coords whereabouts"),
    _t("recipe-search", "find_recipe",
       "Retrieves cooking instructions and ingredient lists for dishes.",
       "cook bake oven dessert cake homemade kitchen soup pasta chef"),
    _t("fitness-tracker", "log_workout",
       "Logs physical exercise sessions and tracks training progress.",
       "workout gym jog pushups calories cardio reps sweat marathon yoga"),
    _t("music-streaming", "play",
       "Plays audio tracks and curated playlists from a music catalog.",
       "song listen album band spotify tunes jazz lyrics rock singer"),
    _t("movie-showtimes", "showtimes",
       "Lists cinema screenings and theater schedules for films.",
       "watch popcorn imax flick premiere blockbuster sequel trailer matinee marvel"),
    _t("package-tracking", "track",
       "Reports shipment status for parcels using carrier tracking numbers.",
       "arrived ups fedex courier box shipped dhl mailman lost eta"),
    _t("pharmacy", "check_stock",
       "Checks medication availability and prescription refills at drugstores.",
       "pills medicine ibuprofen cough painkiller aspirin allergy chemist vitamins headache"),
    _t("doctor-appointments", "book_consultation",
       "Schedules consultations with licensed medical practitioners.",
       "sick checkup dentist clinic fever gp pediatrician hurts sore nurse"),
    _t("insurance-quotes", "quote_policy",
       "Estimates premiums for insurance policies based on coverage.",
       "deductible claim protected accident flood homeowners renters theft damage insure"),
    _t("tax-calculator", "compute_tax",
       "Computes income tax liabilities under national fiscal rules.",
       "irs owe refund deduction salary paycheck filing withholding w2 brackets"),
    _t("loan-calculator", "amortize",
       "Calculates amortized repayment schedules for borrowed principal.",
       "mortgage monthly interest emi apr lender installments downpayment debt credit"),
    _t("job-search", "find_jobs",
       "Finds employment vacancies matching skills and location.",
       "hiring career resume cv gig work internship recruiter remote openings"),
    _t("real-estate", "list_properties",
       "Lists residential properties for sale or lease.",
       "apartment house flat condo rent bedroom landlord realtor studio buy"),
    _t("parking", "find_parking",
       "Locates available vehicle parking facilities near a destination.",
       "park garage spot meter lot valet space curb overnight hourly"),
    _t("ev-charging", "find_chargers",
       "Locates electric vehicle charging stations and connector types.",
       "charger tesla plug battery supercharger kwh juice outlet ccs recharge"),
    _t("public-transit", "transit_schedule",
       "Provides bus and subway schedules for urban public transportation.",
       "metro tram ferry line transfer underground tube oyster octopus pass"),
    _t("event-tickets", "buy_admission",
       "Sells admission to concerts, sports matches and live performances.",
       "show stadium festival standing vip lineup encore soldout arena broadway"),
    _t("sports-scores", "scores",
       "Reports results and standings for professional sports leagues.",
       "score won game nba football soccer goals playoff lakers halftime"),
    _t("dictionary", "define",
       "Defines words and provides synonyms from a lexical database.",
       "meaning spell definition lexicon thesaurus antonym slang webster usage etymology"),
    _t("unit-converter", "convert_units",
       "Converts measurements between metric and imperial units.",
       "miles km inches cm celsius fahrenheit kilos feet gallons ounces"),
    _t("timezone", "local_time",
       "Reports local time and offsets across time zones.",
       "clock jetlag oclock utc gmt daylight hours behind ahead noon"),
    _t("wiki-search", "lookup",
       "Retrieves encyclopedia articles and factual summaries.",
       "wikipedia facts history who biography trivia learn explain born invented"),
    _t("image-generation", "generate_image",
       "Synthesizes images from textual prompts using generative models.",
       "draw picture art paint illustration logo sketch cartoon avatar wallpaper"),
    _t("code-runner", "execute",
       "Executes source code snippets in a sandboxed interpreter.",
       "python script run bug compile javascript debug program function output"),
    _t("file-storage", "store",
       "Uploads and retrieves documents in cloud storage buckets.",
       "save backup dropbox folder pdf share sync gigabytes photos download"),
    _t("password-manager", "vault",
       "Stores and generates credentials in an encrypted vault.",
       "password login forgot secure account passphrase 2fa hack lock master"),
    _t("smart-home", "control_device",
       "Controls connected household appliances and lighting.",
       "lights thermostat turn dim alexa heating fan ac switch blinds"),
    _t("grocery-delivery", "order_groceries",
       "Orders supermarket products for doorstep delivery.",
       "milk eggs bread veggies fruit groceries instacart basket bananas snacks"),
    _t("pet-services", "book_pet_care",
       "Books grooming, boarding and veterinary care for pets.",
       "dog cat puppy kitten vet walker sitter groomer leash kennel"),
    _t("language-learning", "lesson",
       "Offers vocabulary drills and grammar lessons for learners.",
       "duolingo fluent practice flashcards tutor conjugate study beginner quiz accent"),
    _t("charity-donation", "donate",
       "Processes charitable contributions to registered nonprofit organizations.",
       "give fundraiser cause volunteer unicef tithe sponsor pledge relief charity"),
    _t("horoscope", "reading",
       "Publishes astrological readings for zodiac signs.",
       "leo virgo stars luck aries pisces fortune tarot destiny scorpio"),
    _t("air-quality", "aqi",
       "Measures atmospheric pollution indices and particulate concentrations.",
       "smog pm25 haze breathe mask asthma dusty smoky aqi outdoor"),
)

# Words shared by every topic: where, when, and the filler people type around a request.
CITIES = ("beijing", "shanghai", "paris", "tokyo", "london", "berlin", "sydney", "toronto")
TIMES = ("today", "tomorrow", "this weekend", "next week", "on friday", "tonight", "in june")
OPENERS = ("", "i need", "can you find", "please help me with", "what about", "show me",
           "i am looking for", "any", "quick question about", "tell me about")
JOINERS = (", and ", ". also ", "; plus ", ", then ", " and also ")
